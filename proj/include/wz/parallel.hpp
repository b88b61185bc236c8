#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace wz {

/// Worker count: WZ_THREADS caps it, default is all hardware threads.
[[nodiscard]] inline int worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("WZ_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1 && v < 1024) return static_cast<int>(v);
    }
    return static_cast<int>(hw);
}

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
///
/// Chunk boundaries depend only on (n, chunk_size), never on the worker
/// count, so per-chunk results reduced in chunk order are bit-identical
/// for any number of workers. fn must only write state owned by its chunk.
template <class Fn>
inline void for_each_chunk(std::int64_t n, std::int64_t chunk_size, Fn&& fn) {
    if (n <= 0) return;
    const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    int workers = worker_count();
    if (workers > n_chunks) workers = static_cast<int>(n_chunks);

    if (workers <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }

    std::atomic<std::int64_t> next{0};
    auto body = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks) return;
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
}

} // namespace wz
