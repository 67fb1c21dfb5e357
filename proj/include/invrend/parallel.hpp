#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace invrend {

// Worker count: INVREND_NUM_THREADS env var overrides the OpenMP default.
int worker_count();
void set_worker_count(int n);

// Parallel loop over [0, n). Each index must write disjoint outputs; the
// helper makes no ordering promise beyond that. serial_for is the reference
// path used by tests and benchmarks.
void parallel_for(int64_t n, const std::function<void(int64_t)>& body);
void serial_for(int64_t n, const std::function<void(int64_t)>& body);

// Chunked variant for reductions: the loop is split into a fixed number of
// chunks independent of the worker count, each chunk handled by exactly one
// worker. Reducing the per-chunk accumulators in chunk order gives results
// that do not depend on scheduling.
void parallel_chunks(int64_t n, int num_chunks,
                     const std::function<void(int chunk, int64_t begin, int64_t end)>& body);

}  // namespace invrend
