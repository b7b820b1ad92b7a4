// Number <-> text helpers used by the matrix and report file formats.
// Doubles are serialized shortest-round-trip so save/load is bit-exact;
// infinities use the literal "inf" per the matrix file format.
#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "lmphylo/errors.hpp"

namespace lmphylo {

inline std::string fmt_double(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    if (v == 0.0)
        v = 0.0; // normalize -0
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what = "number") {
    if (s == "inf" || s == "+inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw parse_error("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

} // namespace lmphylo
