#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sted {

// Deterministic RNG. mt19937_64 is fully specified by the standard, and the
// distributions below are implemented explicitly, so a given seed produces
// the same stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed), seed_mix_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [0, n)
    int64_t below(int64_t n) { return static_cast<int64_t>(gen_() % static_cast<uint64_t>(n)); }

    // derive an independent child stream (for parallel-safe per-sample seeding)
    uint64_t derive(uint64_t salt) const {
        uint64_t z = seed_mix_ + salt * 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    void reseed(uint64_t seed) {
        gen_.seed(seed);
        seed_mix_ = seed;
        have_spare_ = false;
    }

private:
    std::mt19937_64 gen_;
    uint64_t seed_mix_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sted
