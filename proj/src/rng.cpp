#include "mew/rng.hpp"

#include <cmath>
#include <numbers>

namespace mew {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    ++state_.counter;
    return splitmix(state_.seed * kGolden + splitmix(state_.counter + state_.seed));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: empty range");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

double Rng::normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::uint64_t stream) const {
    return Rng(splitmix(state_.seed ^ splitmix(stream + kGolden)));
}

Tensor randn(const Shape& shape, Rng& rng, double std, double mean) {
    if (!(std > 0.0)) throw std::invalid_argument("randn: std must be positive");
    Tensor t(shape);
    for (double& v : t.data()) v = mean + std * rng.normal();
    return t;
}

Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace mew
