#include "bssr/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t SeededRng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

double SeededRng::next_gauss() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so log never sees zero.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::size_t SeededRng::next_index(std::size_t n) {
    if (n == 0) throw ParamError("next_index: n must be positive");
    // Modulo bias is negligible for n << 2^64 and irrelevant to the
    // determinism contract.
    return static_cast<std::size_t>(next_u64() % n);
}

Matrix gauss_sample(SeededRng& rng, std::size_t rows, std::size_t cols,
                    double mean, double std) {
    if (std < 0.0)
        throw ParamError("gauss_sample: std must be >= 0, got " + std::to_string(std));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = mean + std * rng.next_gauss();
    return m;
}

}  // namespace bssr
