#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "common.hpp"

namespace unitprompt {

// Seeded generator built on mt19937_64. The distribution transforms are done
// by hand because the std:: distribution objects are implementation-defined,
// which would break byte-identical reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_mix_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] by rejection, bias-free.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        require(lo <= hi, format_msg("uniform_int: empty range [", lo, ", ", hi, "]"));
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(engine_());
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return lo + static_cast<int64_t>(r % span);
    }

    // Standard normal via Box-Muller, caching the second draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Picks an index with probability proportional to weights[i].
    size_t categorical(const std::vector<double>& weights) {
        require(!weights.empty(), "categorical: empty weight vector");
        double total = 0.0;
        for (double w : weights) {
            require(w >= 0.0, "categorical: negative weight");
            total += w;
        }
        require(total > 0.0, "categorical: weights sum to zero");
        double x = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (x < acc) return i;
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent stream, so sub-tasks cannot perturb each other's
    // draw sequences.
    Rng fork(uint64_t salt) const {
        uint64_t x = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ULL);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x, x);
    }

private:
    Rng(uint64_t seed, uint64_t mix) : engine_(seed), seed_mix_(mix) {}

    std::mt19937_64 engine_;
    uint64_t seed_mix_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace unitprompt
