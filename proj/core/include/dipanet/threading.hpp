#pragma once
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace dipanet {

// Static row partition across threads. Each index is processed by exactly one
// thread and writes only its own outputs, so results are identical for every
// thread count.
inline void parallel_for(std::size_t count, unsigned threads,
                         const std::function<void(std::size_t begin, std::size_t end)>& body) {
    if (threads <= 1 || count < 2 * threads) {
        body(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        if (begin >= count) break;
        const std::size_t end = std::min(count, begin + chunk);
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& th : pool) th.join();
}

} // namespace dipanet
