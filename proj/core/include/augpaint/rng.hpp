#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "augpaint/tensor.hpp"

namespace augpaint {

// Deterministic random source. All distribution transforms are implemented
// here (not via std:: distributions, whose algorithms are
// implementation-defined) so that streams are stable for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Inclusive range, unbiased multiply-shift mapping.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (cosine branch only).
    double normal();

    void fill_normal(float* p, std::int64_t count);
    void fill_normal(Tensor& t) { fill_normal(t.data(), t.size()); }

private:
    std::mt19937_64 eng_;
};

// Stable substream key derived from a base seed, a string tag, and an index.
// Used to make per-sample generation independent of iteration order.
std::uint64_t derive_stream_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index);

}  // namespace augpaint
