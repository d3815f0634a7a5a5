#pragma once

#include <cstdint>
#include <string_view>

namespace blockoa {

// xoshiro256** with splitmix64 seeding. The standard <random> engines are
// portable but the distributions are not, and datasets must be reproducible
// bit for bit across platforms, so all draws are implemented here.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // The three hot draws live in the header: sampling loops call them per
    // cell, and an out-of-line call would cost more than the draw.
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

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi). Returns exactly lo when lo == hi.
    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Standard normal via Box-Muller. Pairs are cached, so a single Rng
    // consumed only through normal() stays on a fixed draw schedule.
    double normal();

    // Uniform integer in [0, n), unbiased by rejection. n must be > 0.
    std::uint64_t below(std::uint64_t n);

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stateless advance of the splitmix64 sequence; used for seeding and
// seed derivation.
std::uint64_t splitmix64_next(std::uint64_t& state);

// Child seed for an independent stream, derived from a parent seed, a short
// role tag, and an index. Distinct (tag, index) pairs give streams that do
// not collide in practice; the derivation is pure so callers can rebuild any
// stream (e.g. the one for sample l) without drawing the ones before it.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index = 0);

}  // namespace blockoa
