#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace robedit {

// All randomness in the project flows from explicit seeds through the
// helpers below. std::mt19937_64 is fully specified by the standard; the
// uniform/normal draws are hand-rolled (the std distributions are
// implementation-defined and would break bitwise reproducibility).

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named splittable seed scheme: (base, label, index) -> child seed.
// Parallel workers drawing from derived seeds produce results independent
// of scheduling.
inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index) {
    return splitmix64(splitmix64(base ^ fnv1a64(label)) ^ index);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform53(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Deterministic normal sampler (Box-Muller with cached spare).
class NormalSampler {
public:
    explicit NormalSampler(uint64_t seed) : rng_(seed) {}

    double next(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + spare_ * stddev;
        }
        const double u1 = uniform53(rng_);
        const double u2 = uniform53(rng_);
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + r * std::cos(theta) * stddev;
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace robedit
