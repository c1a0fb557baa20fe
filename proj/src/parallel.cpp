#include "occudiff/parallel.hpp"

#include <stdexcept>

namespace occudiff {

namespace {
std::atomic<int> g_threads{0};  // 0 = use hardware_concurrency
thread_local bool t_in_parallel = false;
}  // namespace

void set_thread_count(int n) {
    if (n < 0) throw std::invalid_argument("thread count must be >= 0");
    g_threads.store(n);
}

int thread_count() {
    int n = g_threads.load();
    if (n == 0) {
        unsigned hc = std::thread::hardware_concurrency();
        n = hc == 0 ? 1 : static_cast<int>(hc);
    }
    return n;
}

void parallel_for_blocks(size_t total, size_t block_size,
                         const std::function<void(size_t, size_t)>& fn) {
    if (total == 0) return;
    if (block_size == 0) block_size = 1;
    size_t nblocks = (total + block_size - 1) / block_size;
    int nthreads = thread_count();

    if (nthreads <= 1 || nblocks <= 1 || t_in_parallel) {
        t_in_parallel = true;
        for (size_t b = 0; b < nblocks; ++b) {
            fn(b * block_size, std::min(total, (b + 1) * block_size));
        }
        t_in_parallel = false;
        return;
    }

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        t_in_parallel = true;
        for (;;) {
            size_t b = next.fetch_add(1);
            if (b >= nblocks) break;
            fn(b * block_size, std::min(total, (b + 1) * block_size));
        }
        t_in_parallel = false;
    };

    size_t nspawn = std::min<size_t>(static_cast<size_t>(nthreads), nblocks) - 1;
    std::vector<std::thread> threads;
    threads.reserve(nspawn);
    for (size_t i = 0; i < nspawn; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
}

}  // namespace occudiff
