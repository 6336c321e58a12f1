#pragma once

#include <cstdint>
#include <random>

namespace bnsp {

/// Mixes ids into a single seed so that (seed, a, b) identify an
/// independent, reproducible stream (e.g. a = epoch/pass, b = window id).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0);

/// Deterministic random stream. Gaussian draws use an explicit Box-Muller
/// transform so sequences are stable across standard library versions.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0)
        : gen_(mix_seed(seed, a, b, c)) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform draw in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal draw.
    double normal();

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bnsp
