#include "augpaint/rng.hpp"

#include <cmath>

#include "augpaint/errors.hpp"

namespace augpaint {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ConfigError("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Lemire multiply-shift; bias is negligible for span << 2^64 and the
    // mapping is fully deterministic.
    const unsigned __int128 m =
        static_cast<unsigned __int128>(eng_()) * static_cast<unsigned __int128>(span);
    return lo + static_cast<std::int64_t>(m >> 64);
}

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

void Rng::fill_normal(float* p, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i) {
        p[i] = static_cast<float>(normal());
    }
}

std::uint64_t derive_stream_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index) {
    // FNV-1a over the tag, mixed with base and index through splitmix64.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(base ^ h);
    s = splitmix64(s ^ (0x5851f42d4c957f2dULL * (index + 1)));
    return s;
}

}  // namespace augpaint
