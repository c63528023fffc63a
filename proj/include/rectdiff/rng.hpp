#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace rectdiff {

// splitmix64 mix; used to derive independent sub-stream seeds from one
// master seed so that every source of randomness in a run is a pure
// function of that seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. Gaussian samples come from an explicit Box-Muller
// transform on top of mt19937_64 so the sample sequence is pinned by this
// code rather than by the standard library's unspecified distribution
// algorithms.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform double in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // unbiased integer in [lo, hi] via rejection
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<int>(x % span);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log() is finite
        double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<double> normal_vector(size_t n, double stddev = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = stddev * normal();
        return v;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rectdiff
