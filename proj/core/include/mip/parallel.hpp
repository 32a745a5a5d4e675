#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace mip {

// Runs fn(i) for i in [0, n), split into contiguous chunks across threads.
// Each index writes only its own preallocated slot in the caller's output,
// so results are identical to the serial loop regardless of thread count.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    const size_t n_threads = std::min(hw, n);
    if (n_threads <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    const size_t chunk = (n + n_threads - 1) / n_threads;
    for (size_t t = 0; t < n_threads; ++t) {
        const size_t lo = t * chunk;
        const size_t hi = std::min(lo + chunk, n);
        if (lo >= hi) break;
        threads.emplace_back([lo, hi, &fn] {
            for (size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : threads) th.join();
}

}  // namespace mip
