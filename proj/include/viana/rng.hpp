#pragma once

#include <cstdint>

namespace viana {

// splitmix64: used both as a seed expander and to derive independent
// per-member streams from (seed, member index).  Stream layout is part of the
// reproducibility contract: results must not depend on thread count, so each
// ensemble member owns a generator derived only from its index.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** — small, fast, and fully specified here (the standard library's
// distributions are not bit-stable across implementations, so we avoid them).
class rng_stream {
public:
    rng_stream() : rng_stream(0, 0) {}

    rng_stream(std::uint64_t seed, std::uint64_t stream_index) {
        std::uint64_t sm = seed ^ (0x632be59bd9b4e019ULL * (stream_index + 1));
        for (auto& w : s_) w = splitmix64(sm);
        for (int i = 0; i < 8; ++i) next_u64(); // decorrelate nearby indices
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [a,b)
    double uniform(double a, double b) { return a + (b - a) * next_double(); }

    // uniform in {0,...,n-1}; n must be > 0
    std::uint64_t next_below(std::uint64_t n) {
        // multiply-shift reduction; bias ~2^-64 is irrelevant at lab scale
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

} // namespace viana
