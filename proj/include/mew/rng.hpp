#pragma once

#include <cstdint>

#include "mew/tensor.hpp"

namespace mew {

/// Counter-based generator: output i is a SplitMix64 hash of (seed, i).
/// The integer and uniform streams are bit-identical on every platform.
class Rng {
public:
    struct State {
        std::uint64_t seed = 0;
        std::uint64_t counter = 0;
    };

    explicit Rng(std::uint64_t seed = 0) : state_{seed, 0} {}
    explicit Rng(State s) : state_(s) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }
    /// Standard normal via Box-Muller (consumes two uniforms).
    double normal();

    /// Independent stream derived from this generator's seed and a label.
    Rng fork(std::uint64_t stream) const;

    State state() const { return state_; }

private:
    State state_;
};

Tensor randn(const Shape& shape, Rng& rng, double std, double mean = 0.0);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi);

}  // namespace mew
