#include "judgebench/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <stdexcept>

namespace judgebench::text {
namespace {

enum class CharClass { space, word, mark, other };

CharClass classify(UChar32 c) {
    if (u_isUWhiteSpace(c)) {
        return CharClass::space;
    }
    if (u_isalnum(c)) {
        return CharClass::word;
    }
    const auto category = u_charType(c);
    if (category == U_NON_SPACING_MARK || category == U_COMBINING_SPACING_MARK || category == U_ENCLOSING_MARK) {
        return CharClass::mark;
    }
    return CharClass::other;
}

bool is_niqqud(UChar32 c) { return c >= 0x0591 && c <= 0x05C7 && u_charType(c) == U_NON_SPACING_MARK; }

template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < length) {
        const int32_t start = i;
        UChar32 c = 0;
        U8_NEXT(bytes, i, length, c);
        if (c < 0) {
            c = 0xFFFD;
        }
        fn(c, static_cast<std::size_t>(start), static_cast<std::size_t>(i));
    }
}

void append_utf8(std::string& out, UChar32 c) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, c, error);
    if (error) {
        n = 0;
        U8_APPEND_UNSAFE(buf, n, 0xFFFD);
    }
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

bool is_trim_space(UChar32 c) { return u_isUWhiteSpace(c) || c == 0xFEFF; }

} // namespace

std::string strip_niqqud(std::string_view utf8) {
    std::string out;
    out.reserve(utf8.size());
    for_each_code_point(utf8, [&](UChar32 c, std::size_t, std::size_t) {
        if (!is_niqqud(c)) {
            append_utf8(out, c);
        }
    });
    return out;
}

std::string normalize(std::string_view utf8, NormalizeOptions options) {
    std::string unified;
    unified.reserve(utf8.size());
    for (std::size_t i = 0; i < utf8.size(); ++i) {
        if (utf8[i] == '\r') {
            unified.push_back('\n');
            if (i + 1 < utf8.size() && utf8[i + 1] == '\n') {
                ++i;
            }
        } else {
            unified.push_back(utf8[i]);
        }
    }

    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("ICU NFC normalizer unavailable");
    }
    const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(unified.data(), static_cast<int32_t>(unified.size())));
    const icu::UnicodeString composed = nfc->normalize(source, status);
    if (U_FAILURE(status)) {
        throw std::runtime_error("ICU NFC normalization failed");
    }
    std::string out;
    composed.toUTF8String(out);
    if (options.strip_niqqud) {
        out = strip_niqqud(out);
    }

    std::size_t first = out.size();
    std::size_t last = 0;
    for_each_code_point(out, [&](UChar32 c, std::size_t begin, std::size_t end) {
        if (!is_trim_space(c)) {
            if (first == out.size()) {
                first = begin;
            }
            last = end;
        }
    });
    if (first == out.size()) {
        return {};
    }
    return out.substr(first, last - first);
}

std::vector<std::string> tokenize(std::string_view utf8) {
    std::vector<std::string> tokens;
    std::string current;
    CharClass current_class = CharClass::space;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
        current_class = CharClass::space;
    };
    for_each_code_point(utf8, [&](UChar32 c, std::size_t begin, std::size_t end) {
        CharClass cls = classify(c);
        if (cls == CharClass::space) {
            flush();
            return;
        }
        if (cls == CharClass::mark) {
            // A combining mark extends whatever run it follows.
            cls = current_class == CharClass::space ? CharClass::other : current_class;
        }
        if (cls != current_class) {
            flush();
            current_class = cls;
        }
        current.append(utf8.substr(begin, end - begin));
    });
    flush();
    return tokens;
}

std::vector<Span> whitespace_spans(std::string_view utf8) {
    std::vector<Span> spans;
    bool in_token = false;
    std::size_t token_begin = 0;
    for_each_code_point(utf8, [&](UChar32 c, std::size_t begin, std::size_t) {
        const bool space = u_isUWhiteSpace(c);
        if (!space && !in_token) {
            in_token = true;
            token_begin = begin;
        } else if (space && in_token) {
            in_token = false;
            spans.push_back({token_begin, begin});
        }
    });
    if (in_token) {
        spans.push_back({token_begin, utf8.size()});
    }
    return spans;
}

std::u32string code_points(std::string_view utf8) {
    std::u32string out;
    out.reserve(utf8.size());
    for_each_code_point(utf8, [&](UChar32 c, std::size_t, std::size_t) { out.push_back(static_cast<char32_t>(c)); });
    return out;
}

std::string encode_utf8(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t c : cps) {
        append_utf8(out, static_cast<UChar32>(c));
    }
    return out;
}

bool is_numeric(std::string_view token) {
    if (token.empty()) {
        return false;
    }
    bool all = true;
    for_each_code_point(token, [&](UChar32 c, std::size_t, std::size_t) { all = all && u_isdigit(c); });
    return all;
}

bool is_punctuation(std::string_view token) {
    if (token.empty()) {
        return false;
    }
    bool none = true;
    for_each_code_point(token, [&](UChar32 c, std::size_t, std::size_t) { none = none && !u_isalnum(c); });
    return none;
}

std::size_t word_count(std::string_view utf8) { return whitespace_spans(utf8).size(); }

} // namespace judgebench::text
