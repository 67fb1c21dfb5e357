#include <benchmark/benchmark.h>

#include "invrend/parallel.hpp"
#include "invrend/tracer.hpp"

using namespace invrend;

// Serial reference vs OpenMP kernels; the serial path is the same code with
// the worker pool pinned to one thread.

static void BM_TraceBuffers(benchmark::State& state, bool parallel) {
    FieldConfig cfg;
    FieldStack field(cfg);
    Camera cam = Camera::look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 96, 96, 96 * 1.2);
    TraceConfig tc;
    for (auto _ : state) {
        GeomBuffers g = render_geom_buffers(field, cam, tc, parallel);
        benchmark::DoNotOptimize(g.depth.data.data());
    }
}
BENCHMARK_CAPTURE(BM_TraceBuffers, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TraceBuffers, omp, true)->Unit(benchmark::kMillisecond);

static void BM_SdfEvalBatch(benchmark::State& state, bool parallel) {
    FieldConfig cfg;
    FieldStack field(cfg);
    Rng rng(1);
    std::vector<Vec3> pts(4096);
    for (auto& p : pts) p = rng.unitVector() * 0.8;
    std::vector<double> out(pts.size());
    for (auto _ : state) {
        auto body = [&](int64_t i) {
            double s;
            Vec3 g;
            field.sdf_full(pts[i], &s, &g, nullptr);
            out[i] = s + g.x;
        };
        if (parallel)
            parallel_for(int64_t(pts.size()), body);
        else
            serial_for(int64_t(pts.size()), body);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK_CAPTURE(BM_SdfEvalBatch, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SdfEvalBatch, omp, true)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
