#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace volseg {

/// Runs fn(i) for i in [0, n) over contiguous blocks on worker threads.
/// Callers must make iterations independent; results then do not depend on
/// the number of workers.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_per_worker = 1)
{
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(hw, n / std::max<std::size_t>(min_per_worker, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * block;
        const std::size_t end = std::min(n, begin + block);
        if (begin >= end)
            break;
        pool.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i)
                fn(i);
        });
    }
}

} // namespace volseg
