#pragma once

#include <optional>

#include "invrend/tracer.hpp"

namespace invrend {

struct EdgeWalkConfig {
    int max_steps = 16;           // K
    double step = 1e-3;           // epsilon
    double dot_threshold = 5e-2;  // delta
    int newton_steps = 3;         // level-set reprojection per walk step
    double eps_hit = 5e-5;
    double max_step_norm = 0.05;  // guard: the walk direction blows up near the rim
    int walk_budget = 1024;       // max walks per region, largest Sobel magnitude first
};

struct EdgePoint {
    Vec3 x;          // on the zero level set
    Vec3 n;          // unit normal, |view . n| < delta
    Vec3 grad;       // unnormalized SDF gradient at x
    Vec2 uv;         // subpixel image position
    Vec2 uv_normal;  // unit image-plane projection of n
    int px = 0, py = 0;  // owner pixel
};

struct WalkResult {
    bool found = false;
    Vec3 x, n, grad;
};

// Alg. "locate edge points": slide the ray-surface intersection along the
// level set until the viewing direction is tangent, reprojecting onto the
// surface after every step.
WalkResult walk_to_edge(const SdfField& field, const Vec3& cam_origin, const SurfaceHit& start,
                        const EdgeWalkConfig& cfg);

// Pinhole projection of an edge point plus its normal direction; fails for
// points behind the camera, outside the frame, or with a degenerate
// projected normal.
std::optional<EdgePoint> project_edge_point(const Camera& cam, const Vec3& x, const Vec3& n,
                                            const Vec3& grad);

// Full per-region pipeline: walks from discontinuity-mask hits (largest
// depth-gradient first under the budget), projects, and deduplicates per
// owner pixel keeping the point closest to the pixel center. Owner pixels
// are restricted to the buffer region.
std::vector<EdgePoint> find_edge_points(const SdfField& field, const Camera& cam,
                                        const GeomBuffers& buffers, const TraceConfig& tc,
                                        const EdgeWalkConfig& cfg, bool parallel = true);

// First-order differentiable surface points (value equals x; the parameter
// gradient moves x along grad/|grad|^2 for edges, along the ray for interior
// points). Returns nothing when the direction is singular.
std::optional<NodeId> record_reparam_edge(GradientTape& t, const FieldStack& field, const Vec3& x,
                                          const Vec3& grad_at_x);
std::optional<NodeId> record_reparam_interior(GradientTape& t, const FieldStack& field,
                                              const Vec3& cam_origin, const Vec3& x,
                                              const Vec3& grad_at_x);

// Debug overlay: base grayscale from the hit mask, walk directions color
// coded in rg, detected edge pixels in red.
void dump_edge_overlay(const std::string& path, const GeomBuffers& buffers,
                       const std::vector<EdgePoint>& points);

}  // namespace invrend
