#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace judgebench::text {

struct NormalizeOptions {
    bool strip_niqqud = false;
};

/// NFC, CRLF/CR to LF, outer whitespace trimmed; optionally drops Hebrew
/// pointing marks (nonspacing marks in U+0591..U+05C7).
[[nodiscard]] std::string normalize(std::string_view utf8, NormalizeOptions options = {});

/// Removes Hebrew cantillation and vowel points, keeping maqaf, paseq,
/// sof pasuq and nun hafukha, which are punctuation.
[[nodiscard]] std::string strip_niqqud(std::string_view utf8);

/// Metric tokenizer. A token is a maximal run of letters/digits (combining
/// marks stay attached), or a maximal run of other non-space characters.
/// Whitespace only delimits.
[[nodiscard]] std::vector<std::string> tokenize(std::string_view utf8);

/// Byte span of one whitespace-delimited token.
struct Span {
    std::size_t begin;
    std::size_t end;
};

/// Whitespace-delimited token spans (byte offsets into the input).
[[nodiscard]] std::vector<Span> whitespace_spans(std::string_view utf8);

/// Decodes UTF-8; malformed sequences become U+FFFD.
[[nodiscard]] std::u32string code_points(std::string_view utf8);

[[nodiscard]] std::string encode_utf8(std::u32string_view cps);

/// True when every code point is a decimal digit.
[[nodiscard]] bool is_numeric(std::string_view token);
/// True when the token holds no letter or digit.
[[nodiscard]] bool is_punctuation(std::string_view token);

/// Number of whitespace-delimited words.
[[nodiscard]] std::size_t word_count(std::string_view utf8);

} // namespace judgebench::text
