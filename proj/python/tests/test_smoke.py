import json
import math
import os
import tempfile

import pytest

import judgebench as jb


def test_tokenize_and_normalize():
    assert jb.tokenize("שלום, עולם") == ["שלום", ",", "עולם"]
    assert jb.normalize("  a\r\nb ") == "a\nb"
    assert jb.strip_niqqud("שָׁלוֹם") == "שלום"


def test_metrics():
    assert jb.bleu("a b c d", "a b c d") == pytest.approx(100.0)
    assert jb.bleu("a b c d", "a b c d e") == pytest.approx(100 * math.exp(-0.25))
    assert jb.rouge("a b c", "a x c") == pytest.approx(2 / 3)
    assert jb.rouge("a b c", "a x c", "2") == 0.0
    assert jb.lcs_length(list("abcb"), list("bcb")) == 3
    p, r, f = jb.embed_f([[1, 0]], [[1, 0], [0, 1]])
    assert (p, r) == (pytest.approx(1.0), pytest.approx(0.5))
    assert f == pytest.approx(2 / 3)
    assert jb.jsd({"A": 3}, {"B": 5}) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        jb.bleu("", "a")
    with pytest.raises(ValueError):
        jb.rouge("a", "a", "3")


def test_stats():
    values = [[0.9, 0.2, 0.1], [0.3, 0.8, 0.2], [0.1, 0.3, 0.7]]
    assert jb.centered_gaps(["a", "b", "c"], values) == pytest.approx([0.7, 0.55, 0.55])
    w = jb.wilcoxon([1, 2, 3])
    assert w["exact"] and w["p"] == pytest.approx(0.25)
    assert jb.gwet_ac1(40, 40, 10, 10) == pytest.approx(0.6)
    gap, p = jb.paired_bootstrap([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 200, 1)
    assert gap == 0.0 and p == 1.0

    items = [[[(0.5 if k == j else 0.0) + 0.01 * i for i in range(10)] for j in range(3)] for k in range(3)]
    report = jb.specificity_report(["a", "b", "c"], values, items, resamples=500)
    assert report["mean_delta"] == pytest.approx((0.7 + 0.55 + 0.55) / 3)
    assert [row["judge_id"] for row in report["per_judge"]] == ["a", "b", "c"]


@pytest.mark.skipif(not hasattr(jb, "run_cli"), reason="built without the command-line tool")
def test_cli_ingest():
    with tempfile.TemporaryDirectory() as d:
        corpus = os.path.join(d, "c.jsonl")
        with open(corpus, "w", encoding="utf-8") as fh:
            for i in range(12):
                row = {"judge_id": "A" if i < 8 else "B", "case_id": f"c{i}", "text": "הערעור נדחה. " * 10}
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        config = os.path.join(d, "config.json")
        with open(config, "w") as fh:
            json.dump({"min_docs": 5}, fh)
        run = os.path.join(d, "run")
        code, _, err = jb.run_cli(["--config", config, "--corpus", corpus, "--run-dir", run, "ingest"])
        assert code == 0, err
        with open(os.path.join(run, "ingest", "summary.json")) as fh:
            assert json.load(fh)["judges_retained"] == ["A"]
        code, _, _ = jb.run_cli(["no-such-command"])
        assert code == 1
