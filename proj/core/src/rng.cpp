#include "blockoa/rng.hpp"

#include <cmath>
#include <numbers>

namespace blockoa {

std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
    // xoshiro must not start from the all-zero state; splitmix64 never
    // produces four zero words from any seed.
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64_next(sm);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection above the largest multiple of n removes modulo bias.
    const std::uint64_t limit = n * (~std::uint64_t{0} / n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index) {
    // FNV-1a over the tag, then mix in the parent seed and index through
    // splitmix64 so near-identical inputs land far apart.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = seed;
    std::uint64_t mixed = splitmix64_next(state) ^ h;
    state = mixed + 0x632be59bd9b4e019ULL * (index + 1);
    return splitmix64_next(state);
}

}  // namespace blockoa
