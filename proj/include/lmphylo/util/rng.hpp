// Deterministic, fully specified random streams.
//
// Every stochastic operation in the library draws from an RngStream keyed by
// (seed, tag, counters...). Streams for distinct keys are independent, so
// gene k or synthetic-model draw (gene, probe) is reproducible without
// generating its predecessors. No std:: distributions are used anywhere:
// their output is implementation-defined, and frozen test values must not
// depend on the standard library build.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "lmphylo/errors.hpp"

namespace lmphylo {

/// splitmix64 finalizer; the core bit mixer behind all keyed streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

/// FNV-1a over bytes; stable across platforms, used for content fingerprints.
inline std::uint64_t stable_hash64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

/// A splitmix64 sequence. Construct via keyed() to derive independent
/// streams from a master seed plus arbitrary integer/string keys.
class RngStream {
public:
    explicit RngStream(std::uint64_t state) : state_(state) {}

    template <typename... Keys>
    static RngStream keyed(std::uint64_t seed, Keys... keys) {
        std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ull);
        ((h = mix64(h ^ key_bits(keys))), ...);
        return RngStream(h);
    }

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Lemire multiply-shift; bias < 2^-64.
    std::uint64_t below(std::uint64_t n) {
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next()) * static_cast<unsigned __int128>(n);
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Marsaglia polar rejection.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    /// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boost trick below 1.
    double gamma(double shape) {
        if (!(shape > 0.0))
            throw input_error("gamma shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    /// Symmetric Dirichlet(concentration) over `size` categories; sums to 1.
    std::vector<double> dirichlet(std::size_t size, double concentration) {
        std::vector<double> w(size);
        double total = 0.0;
        for (auto& x : w) {
            x = gamma(concentration);
            total += x;
        }
        if (total <= 0.0) { // all draws underflowed; fall back to uniform
            for (auto& x : w)
                x = 1.0 / static_cast<double>(size);
            return w;
        }
        for (auto& x : w)
            x /= total;
        return w;
    }

private:
    static std::uint64_t key_bits(std::uint64_t k) { return k; }
    static std::uint64_t key_bits(std::int64_t k) { return static_cast<std::uint64_t>(k); }
    static std::uint64_t key_bits(int k) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(k)); }
    static std::uint64_t key_bits(unsigned k) { return k; }
    static std::uint64_t key_bits(std::string_view s) { return stable_hash64(s); }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace lmphylo
