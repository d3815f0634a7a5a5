#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace blockoa {

// Static contiguous partition of [begin, end) over `threads` workers.
// Callers must make iterations independent (distinct output slots, own RNG
// streams); results are then identical for any thread count.
inline void parallel_for(std::int64_t begin, std::int64_t end, int threads,
                         const std::function<void(std::int64_t)>& body) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (std::int64_t i = begin; i < end; ++i) body(i);
        return;
    }
    const int workers = static_cast<int>(
        std::min<std::int64_t>(threads, count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = begin + count * w / workers;
        const std::int64_t hi = begin + count * (w + 1) / workers;
        pool.emplace_back([lo, hi, &body] {
            for (std::int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace blockoa
