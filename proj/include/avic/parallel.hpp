#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace avic {

inline int worker_count() {
    static int n = [] {
        if (const char* env = std::getenv("AVIC_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return n;
}

// Static fork-join over [begin,end). Chunks are contiguous and every chunk
// writes only its own outputs, so results do not depend on the thread count.
inline void parallel_for(int64_t begin, int64_t end,
                         const std::function<void(int64_t, int64_t)>& body,
                         int64_t min_grain = 1) {
    int64_t n = end - begin;
    if (n <= 0) return;
    int threads = worker_count();
    int64_t chunks = std::min<int64_t>(threads, std::max<int64_t>(1, n / std::max<int64_t>(1, min_grain)));
    if (chunks <= 1) {
        body(begin, end);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(chunks - 1));
    int64_t per = (n + chunks - 1) / chunks;
    for (int64_t c = 1; c < chunks; ++c) {
        int64_t b = begin + c * per;
        int64_t e = std::min(end, b + per);
        if (b >= e) break;
        pool.emplace_back(body, b, e);
    }
    body(begin, std::min(end, begin + per));
    for (auto& t : pool) t.join();
}

}  // namespace avic
