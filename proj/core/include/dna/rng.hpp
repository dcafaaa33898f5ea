#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dna {

// Deterministic generator used everywhere randomness is needed. mt19937_64 is
// fully specified by the standard, and the float construction below avoids
// std::*_distribution (whose output is implementation-defined), so runs are
// bit-reproducible per seed across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    int uniform_int(int n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<int>(x % un);
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    // Normal(0, stddev) truncated to +/- clip_sigmas standard deviations.
    double trunc_normal(double stddev, double clip_sigmas = 2.0) {
        double z = normal();
        while (std::fabs(z) > clip_sigmas) z = normal();
        return z * stddev;
    }

    // Stateless seed derivation: independent of how many streams were derived
    // before, so adding components never shifts the others' initialization.
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Derive an independent sub-generator for a named stream; advances this
    // generator's state.
    Rng fork(uint64_t stream) { return Rng(derive(engine_(), stream)); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dna
