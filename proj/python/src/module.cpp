#include "judgebench/error.hpp"
#include "judgebench/metrics.hpp"
#include "judgebench/stats.hpp"
#include "judgebench/text.hpp"

#ifdef JUDGEBENCH_WITH_CLI
#include "cli/commands.hpp"
#endif

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace judgebench;

namespace {

metrics::RougeVariant rouge_variant(const std::string& name) {
    if (name == "1" || name == "rouge1") {
        return metrics::RougeVariant::r1;
    }
    if (name == "2" || name == "rouge2") {
        return metrics::RougeVariant::r2;
    }
    if (name == "L" || name == "rougeL") {
        return metrics::RougeVariant::rL;
    }
    throw PreconditionError("unknown rouge variant: " + name);
}

py::dict wilcoxon_dict(const stats::WilcoxonResult& r) {
    py::dict d;
    d["statistic"] = r.statistic;
    d["w_plus"] = r.w_plus;
    d["p"] = r.p_two_sided;
    d["n_used"] = r.n_used;
    d["exact"] = r.exact;
    d["degenerate"] = r.degenerate;
    return d;
}

stats::ScoreMatrix matrix(std::vector<std::string> judges, std::vector<std::vector<double>> values,
                          bool higher_is_better) {
    return {std::move(judges), std::move(values), "", higher_is_better};
}

} // namespace

PYBIND11_MODULE(_judgebench, m) {
    m.doc() = "judge-specific generation benchmark: metrics and statistics";

    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
    py::register_exception<ProviderError>(m, "ProviderError", PyExc_RuntimeError);

    m.def("normalize", [](const std::string& s, bool strip_niqqud) {
        return text::normalize(s, {strip_niqqud});
    }, py::arg("text"), py::arg("strip_niqqud") = false);
    m.def("strip_niqqud", [](const std::string& s) { return text::strip_niqqud(s); });
    m.def("tokenize", [](const std::string& s) { return text::tokenize(s); });

    m.def("bleu", [](const std::string& c, const std::string& r) { return metrics::bleu(c, r); },
          py::arg("candidate"), py::arg("reference"));
    m.def("rouge", [](const std::string& c, const std::string& r, const std::string& variant) {
        return metrics::rouge(c, r, rouge_variant(variant));
    }, py::arg("candidate"), py::arg("reference"), py::arg("variant") = "L");
    m.def("lcs_length", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return metrics::lcs_length(a, b);
    });
    m.def("cosine", [](const std::vector<double>& a, const std::vector<double>& b) { return metrics::cosine(a, b); });
    m.def("jsd", [](const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
        return metrics::jsd(p, q);
    }, "Jensen-Shannon divergence (base 2) between two count maps.");
    m.def("embed_f", [](const std::vector<std::vector<double>>& cand, const std::vector<std::vector<double>>& ref) {
        llm::TokenEmbeddings c{std::vector<std::string>(cand.size()), cand};
        llm::TokenEmbeddings r{std::vector<std::string>(ref.size()), ref};
        const auto s = metrics::embed_f(c, r);
        return py::make_tuple(s.precision, s.recall, s.f);
    }, "Greedy token matching; returns (precision, recall, f).");

    m.def("centered_gaps", [](std::vector<std::string> judges, std::vector<std::vector<double>> values,
                              bool higher_is_better) {
        return stats::centered_gaps(matrix(std::move(judges), std::move(values), higher_is_better));
    }, py::arg("judges"), py::arg("values"), py::arg("higher_is_better") = true);
    m.def("wilcoxon", [](const std::vector<double>& d) { return wilcoxon_dict(stats::wilcoxon_signed_rank(d)); });
    m.def("paired_bootstrap", [](const std::vector<double>& matched, const std::vector<double>& other,
                                 std::size_t resamples, std::uint64_t seed) {
        const auto r = stats::paired_bootstrap(matched, other, resamples, seed);
        return py::make_tuple(r.mean_gap, r.p);
    }, py::arg("matched"), py::arg("other"), py::arg("resamples") = stats::kDefaultResamples, py::arg("seed") = 0);
    m.def("gwet_ac1", [](std::size_t both_yes, std::size_t both_no, std::size_t yes_no, std::size_t no_yes) {
        return stats::gwet_ac1({both_yes, both_no, yes_no, no_yes});
    }, py::arg("both_yes"), py::arg("both_no"), py::arg("yes_no"), py::arg("no_yes"));
    m.def("specificity_report", [](std::vector<std::string> judges, std::vector<std::vector<double>> values,
                                   const stats::PerItemScores& items, bool higher_is_better, std::size_t resamples,
                                   std::uint64_t seed, double alpha) {
        const auto r = stats::specificity_report(matrix(std::move(judges), std::move(values), higher_is_better),
                                                 items, resamples, seed, alpha);
        return nlohmann::json(r).dump();
    }, py::arg("judges"), py::arg("values"), py::arg("items"), py::arg("higher_is_better") = true,
       py::arg("resamples") = stats::kDefaultResamples, py::arg("seed") = 0, py::arg("alpha") = stats::kDefaultAlpha,
       "Returns the report as a JSON string.");

#ifdef JUDGEBENCH_WITH_CLI
    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"judgebench"};
        for (const auto& a : args) {
            argv.push_back(a.c_str());
        }
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
#endif
}
