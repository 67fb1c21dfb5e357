#include "invrend/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace invrend {

namespace {
std::atomic<int> g_workers{0};

int env_workers() {
    if (const char* s = std::getenv("INVREND_NUM_THREADS")) {
        int n = std::atoi(s);
        if (n > 0) return n;
    }
    return 0;
}
}  // namespace

int worker_count() {
    int n = g_workers.load();
    if (n > 0) return n;
    n = env_workers();
    if (n <= 0) {
#ifdef _OPENMP
        n = omp_get_max_threads();
#else
        n = 1;
#endif
    }
    return std::max(1, n);
}

void set_worker_count(int n) { g_workers.store(n); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& body) {
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(workers)
    for (int64_t i = 0; i < n; ++i) body(i);
#else
    for (int64_t i = 0; i < n; ++i) body(i);
#endif
}

void serial_for(int64_t n, const std::function<void(int64_t)>& body) {
    for (int64_t i = 0; i < n; ++i) body(i);
}

void parallel_chunks(int64_t n, int num_chunks,
                     const std::function<void(int, int64_t, int64_t)>& body) {
    num_chunks = int(std::min<int64_t>(std::max(1, num_chunks), std::max<int64_t>(1, n)));
    const int64_t per = (n + num_chunks - 1) / std::max(1, num_chunks);
    const int workers = worker_count();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
#endif
    for (int c = 0; c < num_chunks; ++c) {
        const int64_t b = int64_t(c) * per;
        const int64_t e = std::min(n, b + per);
        if (b < e) body(c, b, e);
    }
    (void)workers;
}

}  // namespace invrend
