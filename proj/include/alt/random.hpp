#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "alt/tensor.hpp"
#include "alt/util.hpp"

namespace alt {

// Seeded RNG wrapper. Gaussians go through explicit Box-Muller so sequences
// do not depend on the standard library's distribution internals.
struct Rng {
    std::mt19937_64 eng;

    explicit Rng(uint64_t seed = 0) : eng(seed) {}

    // uniform in [0, 1)
    double uniform() { return (eng() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t index(uint64_t n) { return n ? eng() % n : 0; }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(index(static_cast<uint64_t>(hi - lo + 1)));
    }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    template <class S>
    void fill_normal(Tensor<S>& t, double mean, double std) {
        for (auto& v : t.data) v = static_cast<S>(normal(mean, std));
    }

    template <class S>
    void fill_uniform(Tensor<S>& t, double lo, double hi) {
        for (auto& v : t.data) v = static_cast<S>(uniform(lo, hi));
    }
};

// Derives a stable per-name seed so initialization does not depend on the
// order in which parameters are declared.
inline uint64_t seed_for(uint64_t global_seed, const std::string& name) {
    uint64_t h = fnv1a64(name);
    h ^= global_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

}  // namespace alt
