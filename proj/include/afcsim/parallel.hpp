#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace afcsim {

/// Runs fn(chunk, begin, end) over [0, n) split into a fixed number of
/// chunks. The partition depends only on n and chunks, never on the worker
/// count, so callers that reduce per-chunk results in chunk order get
/// bit-identical output for any thread count.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, int threads, Fn&& fn)
{
    if (n == 0) {
        return;
    }
    chunks = std::clamp<std::size_t>(chunks, 1, n);
    auto bounds = [&](std::size_t c) { return std::pair{c * n / chunks, (c + 1) * n / chunks}; };

    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            const auto [b, e] = bounds(c);
            fn(c, b, e);
        }
        return;
    }

    std::mutex m;
    std::exception_ptr error;
    std::size_t next = 0;
    auto worker = [&] {
        while (true) {
            std::size_t c = 0;
            {
                std::lock_guard lock(m);
                if (next >= chunks || error) {
                    return;
                }
                c = next++;
            }
            try {
                const auto [b, e] = bounds(c);
                fn(c, b, e);
            } catch (...) {
                std::lock_guard lock(m);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < std::min(workers, chunks); ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Element-wise parallel map over [0, n) with a fixed chunk count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn, std::size_t chunks = 64)
{
    parallel_chunks(n, chunks, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            fn(i);
        }
    });
}

} // namespace afcsim
