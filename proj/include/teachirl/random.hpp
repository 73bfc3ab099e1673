#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "teachirl/errors.hpp"

namespace teachirl {

/// Deterministic random stream. All draws are built on the raw 64-bit engine
/// output so results do not depend on the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Seed of an independent child stream: master offset by component id
    /// times an odd constant, then mixed with splitmix64.
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t component) {
        std::uint64_t z = master + (component + 1) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static Rng derive(std::uint64_t master, std::uint64_t component) {
        return Rng(derive_seed(master, component));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (lo, hi).
    double uniform_open(double lo, double hi) {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return lo + (hi - lo) * u;
    }

    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw InvalidArgument("uniform_index: empty range");
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t bound = n;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard exponential, Exp(1).
    double exponential() { return -std::log1p(-uniform()); }

    /// Samples an index from unnormalized non-negative weights given by a
    /// callable `weight(i)` for i in [0, n).
    template <class WeightFn>
    std::size_t categorical(std::size_t n, WeightFn&& weight) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += weight(i);
        if (!(total > 0.0)) throw InvalidArgument("categorical: weights sum to zero");
        const double target = uniform() * total;
        double cumulative = 0.0;
        std::size_t last_positive = n;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weight(i);
            if (w <= 0.0) continue;
            last_positive = i;
            cumulative += w;
            if (target < cumulative) return i;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace teachirl
