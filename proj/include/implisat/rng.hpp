#pragma once

#include <array>
#include <cstdint>

namespace implisat {

/// xoshiro256** seeded through SplitMix64.
///
/// The algorithm is fixed here rather than borrowed from <random> so that a
/// seed reproduces the same stream on every compiler and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) built from the top 53 bits.
    double next_double();

    /// Uniform double in [lo, hi). Throws DomainError unless lo < hi.
    double uniform(double lo, double hi);

    /// Unbiased integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    const std::array<std::uint64_t, 4>& state() const { return state_; }

private:
    std::array<std::uint64_t, 4> state_{};
};

/// Derives a child seed so independent streams (init, sampling, noise) never
/// share a sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace implisat
