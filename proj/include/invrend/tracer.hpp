#pragma once

#include <string>

#include "invrend/camera.hpp"
#include "invrend/field.hpp"

namespace invrend {

struct TraceConfig {
    int max_steps = 256;
    double eps_hit = 5e-5;
    double relax = 1.0;            // plain sphere tracing
    double bound_radius = 1.0;     // scene lives inside the unit sphere
    double grazing_factor = 10.0;  // |S| <= factor*eps at exhaustion still hits
    double miss_depth = 2.0;       // sentinel: 2 x scene radius
    double sobel_tau = 1e-2;
};

struct SurfaceHit {
    Vec3 x;
    Vec3 n;          // normalized SDF gradient
    double t = 0;
    bool hit = false;
    bool converged = false;
};

struct GeomBuffers {
    int width = 0, height = 0;
    int x0 = 0, y0 = 0;  // image-space origin of this (possibly cropped) region
    Imaged depth;        // ray depth, miss sentinel elsewhere
    Imaged normal;       // 3 channels, zero on miss
    Maskimg hit_mask;
    Maskimg discontinuity;  // depth Sobel magnitude above tau, within 1px of hits
};

SurfaceHit trace_ray(const SdfField& field, const Ray& ray, const TraceConfig& cfg);
SurfaceHit sphere_trace(const SdfField& field, const Camera& cam, const Vec2& pixel,
                        const TraceConfig& cfg);

// Center-ray buffers for an image region (OpenMP across pixels; pass
// parallel=false for the serial reference path).
GeomBuffers render_geom_buffers(const SdfField& field, const Camera& cam, const TraceConfig& cfg,
                                bool parallel = true);
GeomBuffers render_geom_buffers_region(const SdfField& field, const Camera& cam,
                                       const TraceConfig& cfg, int x0, int y0, int w, int h,
                                       bool parallel = true);

// Exposed for tests: normalized 3x3 Sobel magnitude (depth units per
// pixel), replicated borders.
Imaged sobel_magnitude(const Imaged& depth);
Maskimg dilate1(const Maskimg& m);

// Debug dumps: depth.pfm (single channel), normal.pfm, hit.pfm, disc.pfm.
void dump_geom_buffers(const std::string& dir, const GeomBuffers& g);

}  // namespace invrend
