#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace panova {

// --threads flag wins; PANOVA_THREADS is the fallback; else hardware.
inline int default_threads() {
    if (const char* env = std::getenv("PANOVA_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Each index writes only its own slot, so results are schedule-independent.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = default_threads();
    if (threads == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace panova
