#pragma once

#include <cstdint>
#include <random>

namespace rdeep {

/// Seeded stream with a portable uniform draw. Distinct `stream` ids give
/// independent sequences for the same seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
        engine_.seed(seq);
    }

    // Uniform on [lo, hi].
    double uniform(double lo, double hi) {
        const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * unit;
    }
    double symmetric(double bound) { return bound == 0.0 ? 0.0 : uniform(-bound, bound); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

enum Stream : std::uint64_t { kNoiseStream = 1, kAttackStream = 2, kExcitationStream = 3, kSamplingStream = 4 };

}  // namespace rdeep
