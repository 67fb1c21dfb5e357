#include "invrend/edges.hpp"

#include <algorithm>
#include <map>

#include "invrend/image_io.hpp"
#include "invrend/parallel.hpp"

namespace invrend {

WalkResult walk_to_edge(const SdfField& field, const Vec3& o, const SurfaceHit& start,
                        const EdgeWalkConfig& cfg) {
    WalkResult res;
    Vec3 x = start.x;
    for (int i = 0; i < cfg.max_steps; ++i) {
        double s;
        Vec3 g;
        field.sdf_full(x, &s, &g, nullptr);
        const double gn = g.norm();
        if (gn < 1e-6) return res;  // singular normal
        Vec3 n = g / gn;
        Vec3 to_x = x - o;
        const double dist = to_x.norm();
        if (dist < 1e-9) return res;
        const double view_dot = to_x.dot(n) / dist;
        if (std::abs(view_dot) < cfg.dot_threshold) {
            // Polish onto the level set so downstream reparametrization has
            // a vanishing zeroth-order term.
            for (int j = 0; j < 8 && std::abs(s) > 1e-12; ++j) {
                x = x - g * (s / g.squaredNorm());
                field.sdf_full(x, &s, &g, nullptr);
            }
            res.found = true;
            res.x = x;
            res.n = g.norm() > 1e-9 ? g / g.norm() : n;
            res.grad = g;
            return res;
        }
        const Vec3 v = o - x;
        const double denom = v.dot(n);
        if (std::abs(denom) < 1e-12) return res;  // degenerate and not yet an edge
        Vec3 dir = n - v / denom;
        Vec3 step = dir * cfg.step;
        const double sn = step.norm();
        if (sn < 1e-15) return res;  // no tangential motion possible (e.g. head-on pole)
        if (sn > cfg.max_step_norm) step = step * (cfg.max_step_norm / sn);
        x += step;
        // Newton reprojection onto the zero level set.
        for (int j = 0; j < cfg.newton_steps; ++j) {
            double sj;
            Vec3 gj;
            field.sdf_full(x, &sj, &gj, nullptr);
            const double g2 = gj.squaredNorm();
            if (g2 < 1e-12) return res;
            x = x - gj * (sj / g2);
            if (std::abs(sj) <= cfg.eps_hit) break;
        }
        if (std::abs(field.sdf(x)) > 1e-3) return res;  // walked off the surface
    }
    return res;
}

std::optional<EdgePoint> project_edge_point(const Camera& cam, const Vec3& x, const Vec3& n,
                                            const Vec3& grad) {
    Vec2 uv;
    if (!cam.project(x, &uv)) return std::nullopt;  // behind the camera
    if (!cam.contains(uv)) return std::nullopt;
    Vec2 n2 = cam.project_dir(x, n);
    const double nn = n2.norm();
    if (nn < 1e-4) return std::nullopt;  // normal almost parallel to the optical axis
    EdgePoint e;
    e.x = x;
    e.n = n;
    e.grad = grad;
    e.uv = uv;
    e.uv_normal = n2 * (1.0 / nn);
    e.px = int(std::floor(uv.x));
    e.py = int(std::floor(uv.y));
    return e;
}

std::vector<EdgePoint> find_edge_points(const SdfField& field, const Camera& cam,
                                        const GeomBuffers& buffers, const TraceConfig& tc,
                                        const EdgeWalkConfig& cfg, bool parallel) {
    // Seeds: discontinuity-mask pixels that have a center-ray hit, strongest
    // depth gradient first when over budget.
    Imaged mag = sobel_magnitude(buffers.depth);
    struct Seed {
        int px, py;
        double mag;
    };
    std::vector<Seed> seeds;
    for (int y = 0; y < buffers.height; ++y)
        for (int x = 0; x < buffers.width; ++x)
            if (buffers.discontinuity.at(x, y) && buffers.hit_mask.at(x, y))
                seeds.push_back({x, y, mag.at(x, y)});
    std::stable_sort(seeds.begin(), seeds.end(),
                     [](const Seed& a, const Seed& b) { return a.mag > b.mag; });
    if (int(seeds.size()) > cfg.walk_budget) seeds.resize(cfg.walk_budget);

    std::vector<std::optional<EdgePoint>> found(seeds.size());
    auto body = [&](int64_t i) {
        const Seed& s = seeds[i];
        Vec2 pixel{buffers.x0 + s.px + 0.5, buffers.y0 + s.py + 0.5};
        SurfaceHit hit = sphere_trace(field, cam, pixel, tc);
        if (!hit.hit) return;
        WalkResult w = walk_to_edge(field, cam.origin(), hit, cfg);
        if (!w.found) return;
        found[i] = project_edge_point(cam, w.x, w.n, w.grad);
    };
    if (parallel)
        parallel_for(int64_t(seeds.size()), body);
    else
        serial_for(int64_t(seeds.size()), body);

    // Deduplicate per owner pixel: keep the point closest to the center.
    std::map<std::pair<int, int>, EdgePoint> best;
    for (const auto& e : found) {
        if (!e) continue;
        const int lx = e->px - buffers.x0, ly = e->py - buffers.y0;
        if (lx < 0 || ly < 0 || lx >= buffers.width || ly >= buffers.height) continue;
        Vec2 center{e->px + 0.5, e->py + 0.5};
        const double d = (e->uv - center).norm();
        auto key = std::make_pair(e->px, e->py);
        auto it = best.find(key);
        if (it == best.end() || d < (it->second.uv - Vec2{it->second.px + 0.5,
                                                          it->second.py + 0.5}).norm())
            best[key] = *e;
    }
    std::vector<EdgePoint> out;
    out.reserve(best.size());
    for (auto& [k, v] : best) out.push_back(v);
    return out;
}

std::optional<NodeId> record_reparam_edge(GradientTape& t, const FieldStack& field, const Vec3& x,
                                          const Vec3& grad_at_x) {
    const double g2 = grad_at_x.squaredNorm();
    if (g2 < 1e-12) return std::nullopt;
    NodeId xc = t.constant3(x);
    NodeId s = field.record_sdf_value(t, xc);
    NodeId dir = t.constant3(grad_at_x / g2);
    return t.sub(xc, t.mul(dir, s));
}

std::optional<NodeId> record_reparam_interior(GradientTape& t, const FieldStack& field,
                                              const Vec3& cam_origin, const Vec3& x,
                                              const Vec3& grad_at_x) {
    const Vec3 v = cam_origin - x;
    const double denom = grad_at_x.dot(v);
    if (std::abs(denom) < 1e-9 * v.norm()) return std::nullopt;  // grazing
    NodeId xc = t.constant3(x);
    NodeId s = field.record_sdf_value(t, xc);
    NodeId dir = t.constant3(v / denom);
    return t.sub(xc, t.mul(dir, s));
}

void dump_edge_overlay(const std::string& path, const GeomBuffers& buffers,
                       const std::vector<EdgePoint>& points) {
    Imagef img(buffers.width, buffers.height, 3);
    for (int y = 0; y < buffers.height; ++y)
        for (int x = 0; x < buffers.width; ++x) {
            float base = buffers.hit_mask.at(x, y) ? 0.35f : 0.05f;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = base;
        }
    for (const auto& e : points) {
        const int lx = e.px - buffers.x0, ly = e.py - buffers.y0;
        if (lx < 0 || ly < 0 || lx >= buffers.width || ly >= buffers.height) continue;
        img.at(lx, ly, 0) = 1.0f;
        img.at(lx, ly, 1) = float(0.5 + 0.5 * e.uv_normal.x);
        img.at(lx, ly, 2) = float(0.5 + 0.5 * e.uv_normal.y);
    }
    save_pfm(path, img);
}

}  // namespace invrend
