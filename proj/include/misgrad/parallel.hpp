#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace misgrad {

// Worker cap for per-sample backprop. Defaults to sequential execution; the
// MISGRAD_THREADS environment variable raises it. Results are always merged
// in index order, so the thread count never changes numerics.
inline int worker_count() {
    static const int cached = [] {
        if (const char* env = std::getenv("MISGRAD_THREADS")) {
            const int n = std::atoi(env);
            if (n >= 1) return n;
        }
        return 1;
    }();
    return cached;
}

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

} // namespace misgrad
