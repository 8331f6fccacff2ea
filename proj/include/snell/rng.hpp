#pragma once

#include <cmath>
#include <cstdint>

namespace snell {

/// splitmix64 finalizer; the mixing core of the counter-based generator.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Acklam's rational approximation of the inverse normal CDF
/// (absolute error below 1.2e-9 on (0,1), ample for Monte Carlo draws).
double inverse_normal_cdf(double p);

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, step, slot), so results do not depend on evaluation
/// order or thread scheduling.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t slot = 0) const {
        std::uint64_t h = mix64(mix64(mix64(mix64(seed_) ^ stream) ^ step) ^ slot);
        // 53 mantissa bits, nudged away from 0 so the inverse CDF stays finite.
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double gaussian(std::uint64_t stream, std::uint64_t step, std::uint64_t slot = 0) const {
        return inverse_normal_cdf(uniform(stream, step, slot));
    }

    /// Uniform on [lo, hi).
    double uniform_range(double lo, double hi,
                         std::uint64_t stream, std::uint64_t step, std::uint64_t slot = 0) const {
        return lo + (hi - lo) * uniform(stream, step, slot);
    }

private:
    std::uint64_t seed_;
};

}  // namespace snell
