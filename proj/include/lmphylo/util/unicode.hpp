// Minimal UTF-8 helpers. Gene truncation and allele extraction count Unicode
// scalar values, never bytes; these are the only primitives they need.
//
// Malformed sequences are handled permissively: an invalid lead or a truncated
// continuation run counts as a single one-byte character. Corpus files are
// expected to be valid UTF-8; the fallback just keeps truncation total.
#pragma once

#include <cstddef>
#include <string_view>

namespace lmphylo {

/// Byte length of the UTF-8 sequence starting at s[pos].
inline std::size_t utf8_seq_len(std::string_view s, std::size_t pos) {
    const unsigned char lead = static_cast<unsigned char>(s[pos]);
    std::size_t len = 1;
    if (lead >= 0xF0)
        len = 4;
    else if (lead >= 0xE0)
        len = 3;
    else if (lead >= 0xC0)
        len = 2;
    if (pos + len > s.size())
        return 1;
    for (std::size_t i = 1; i < len; ++i) {
        const unsigned char c = static_cast<unsigned char>(s[pos + i]);
        if ((c & 0xC0) != 0x80)
            return 1; // broken continuation, treat lead as lone byte
    }
    return len;
}

/// Number of Unicode scalar values in s.
inline std::size_t cp_count(std::string_view s) {
    std::size_t pos = 0, n = 0;
    while (pos < s.size()) {
        pos += utf8_seq_len(s, pos);
        ++n;
    }
    return n;
}

/// Byte length of the first n code points (all of s if shorter).
inline std::size_t cp_prefix_bytes(std::string_view s, std::size_t n) {
    std::size_t pos = 0;
    while (pos < s.size() && n > 0) {
        pos += utf8_seq_len(s, pos);
        --n;
    }
    return pos;
}

/// First n code points of s as a view.
inline std::string_view cp_prefix(std::string_view s, std::size_t n) {
    return s.substr(0, cp_prefix_bytes(s, n));
}

} // namespace lmphylo
