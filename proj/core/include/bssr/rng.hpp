#pragma once

#include <cstdint>

#include "bssr/matrix.hpp"

namespace bssr {

// xoshiro256** seeded through splitmix64. A fixed, self-contained generator:
// identical seeds give identical streams on every platform, independent of
// the standard library's distribution implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit mantissa.
    double next_double();
    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi);
    // Standard normal via Box-Muller (one spare cached).
    double next_gauss();
    // Uniform index in [0, n). n must be positive.
    std::size_t next_index(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// i.i.d. N(mean, std^2) entries; advances rng deterministically.
Matrix gauss_sample(SeededRng& rng, std::size_t rows, std::size_t cols,
                    double mean, double std);

}  // namespace bssr
