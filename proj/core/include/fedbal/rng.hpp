#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fedbal {

/// Counter-based 64-bit generator (splitmix finalizer) with Box-Muller
/// Gaussians. Every stochastic component owns one stream, keyed through
/// derive_seed, so runs replay bit-exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n); rejection-sampled, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via Box-Muller (second draw cached).
    double gaussian();
    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    void shuffle(std::vector<std::size_t>& items);
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

/// Deterministic, collision-resistant stream derivation from a master seed,
/// a component tag, and an index. Distinct tags or indices give distinct
/// streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index);

} // namespace fedbal
