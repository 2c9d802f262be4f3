// Minimal static-partition worker pool for embarrassingly parallel sweeps.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fibresync {

namespace detail {

inline std::atomic<unsigned>& thread_cap()
{
    static std::atomic<unsigned> cap{0};
    return cap;
}

} // namespace detail

/// Caps worker count for every sweep; 0 restores the default
/// (FIBRESYNC_THREADS, then hardware concurrency).
inline void set_thread_count(unsigned n) { detail::thread_cap().store(n); }

inline unsigned thread_count()
{
    unsigned n = detail::thread_cap().load();
    if (n > 0) return n;
    if (const char* env = std::getenv("FIBRESYNC_THREADS")) {
        try {
            int v = std::stoi(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; results
/// written to per-index slots are therefore independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    const std::size_t chunk = std::max<std::size_t>(1, n / (workers * 16));
    auto body = [&] {
        try {
            for (;;) {
                std::size_t start = next.fetch_add(chunk);
                if (start >= n) return;
                std::size_t stop = std::min(n, start + chunk);
                for (std::size_t i = start; i < stop; ++i) fn(i);
            }
        } catch (...) {
            std::lock_guard lk(err_mu);
            if (!err) err = std::current_exception();
            next.store(n);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace fibresync
