#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "bsbl/errors.hpp"

namespace bsbl {

// Deterministic random source for all generators.
//
// Variates are derived from the raw mt19937_64 stream with fixed arithmetic
// (Box-Muller for gaussians, rejection sampling for bounded integers) instead
// of the std <random> distributions, whose output is implementation-defined.
// Identical seeds therefore reproduce identical experiment data regardless of
// the standard library in use.
class rng {
public:
    explicit rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal variate (Box-Muller, cached pair).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    // Uniform integer in [0, bound) without modulo bias.
    std::uint64_t integer(std::uint64_t bound) {
        if (bound == 0) {
            throw invalid_input("integer bound must be positive");
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t raw = 0;
        do {
            raw = engine_();
        } while (raw >= limit);
        return raw % bound;
    }

    // k distinct indices from [0, n), in selection order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k < 0 || n < 0 || k > n) {
            throw invalid_input("sample size must satisfy 0 <= k <= n");
        }
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            pool[static_cast<std::size_t>(i)] = i;
        }
        std::vector<int> picked(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            const auto j = i + static_cast<int>(integer(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            picked[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
        }
        return picked;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Decorrelated sub-seed for purpose `stream` of a trial seed (splitmix64
// finalizer). Keeps e.g. matrix and signal draws of consecutive trial seeds
// from sharing an mt19937_64 stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace bsbl
