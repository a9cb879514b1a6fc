#pragma once

// Thin UTF-8 helpers over ICU's character properties.

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace moodpipe::unicode {

/// Decodes UTF-8 into code points. Ill-formed sequences become U+FFFD.
inline std::vector<char32_t> decode(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    const auto *s = reinterpret_cast<const std::uint8_t *>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t i = 0;
    while (i < length) {
        UChar32 c = 0;
        U8_NEXT_OR_FFFD(s, i, length, c);
        out.push_back(static_cast<char32_t>(c));
    }
    return out;
}

inline void append_utf8(std::string &out, char32_t c) {
    std::uint8_t buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
    if (error) {
        n = 0;
        U8_APPEND_UNSAFE(buf, n, 0xFFFD);
    }
    out.append(reinterpret_cast<const char *>(buf), static_cast<std::size_t>(n));
}

inline std::string encode(const std::vector<char32_t> &code_points) {
    std::string out;
    out.reserve(code_points.size());
    for (const char32_t c : code_points) {
        append_utf8(out, c);
    }
    return out;
}

/// Number of Unicode scalar values.
inline std::size_t length(std::string_view text) { return decode(text).size(); }

/// Full Unicode lowercase mapping (root locale).
inline std::string to_lower(std::string_view text) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
    u.toLower(icu::Locale::getRoot());
    std::string out;
    u.toUTF8String(out);
    return out;
}

inline bool is_whitespace(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)) != 0; }

/// General category P (Pc, Pd, Ps, Pe, Pi, Pf, Po).
inline bool is_punctuation(char32_t c) { return u_ispunct(static_cast<UChar32>(c)) != 0; }

/// Categories Cc and Cf that are not whitespace.
inline bool is_control(char32_t c) {
    if (is_whitespace(c)) {
        return false;
    }
    const auto type = u_charType(static_cast<UChar32>(c));
    return type == U_CONTROL_CHAR || type == U_FORMAT_CHAR;
}

/// Maximal runs of non-whitespace.
inline std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (const char32_t c : decode(text)) {
        if (is_whitespace(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            append_utf8(current, c);
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

inline std::string_view trim(std::string_view text) {
    const auto *s = reinterpret_cast<const std::uint8_t *>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t begin = -1;
    std::int32_t end = 0;
    std::int32_t i = 0;
    while (i < length) {
        const std::int32_t start = i;
        UChar32 c = 0;
        U8_NEXT_OR_FFFD(s, i, length, c);
        if (!is_whitespace(static_cast<char32_t>(c))) {
            if (begin < 0) {
                begin = start;
            }
            end = i;
        }
    }
    if (begin < 0) {
        return {};
    }
    return text.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin));
}

}  // namespace moodpipe::unicode
