#include "invrend/tracer.hpp"

#include "invrend/image_io.hpp"
#include "invrend/parallel.hpp"

namespace invrend {

void Camera::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::runtime_error("camera: fx, fy must be positive");
    Mat3 rtr = rot.transposed() * rot;
    double err = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) err += sqr(rtr(r, c) - (r == c ? 1.0 : 0.0));
    if (std::sqrt(err) > 1e-6) throw std::runtime_error("camera: rotation is not orthonormal");
    if (!pos.allFinite()) throw std::runtime_error("camera: non-finite position");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double focal_px) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 u = up.normalized();
    if (std::abs(fwd.dot(u)) > 0.999) u = std::abs(fwd.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    Vec3 right = fwd.cross(u).normalized();
    Vec3 down = fwd.cross(right);
    Camera c;
    c.width = width;
    c.height = height;
    c.fx = c.fy = focal_px;
    c.cx = width * 0.5;
    c.cy = height * 0.5;
    for (int r = 0; r < 3; ++r) {
        c.rot(r, 0) = right[r];
        c.rot(r, 1) = down[r];
        c.rot(r, 2) = fwd[r];
    }
    c.pos = eye;
    return c;
}

SurfaceHit trace_ray(const SdfField& field, const Ray& ray, const TraceConfig& cfg) {
    SurfaceHit miss;
    miss.t = cfg.miss_depth;

    // Clip against the bounding sphere.
    const double b = ray.o.dot(ray.d);
    const double c = ray.o.squaredNorm() - cfg.bound_radius * cfg.bound_radius;
    const double disc = b * b - c;
    if (disc <= 0) return miss;
    const double sq = std::sqrt(disc);
    double t = std::max(-b - sq, 0.0);
    const double t_end = -b + sq;
    if (t_end <= 0) return miss;

    auto finish = [&](double th, bool converged) {
        SurfaceHit h;
        h.hit = true;
        h.converged = converged;
        h.t = th;
        h.x = ray.at(th);
        double s;
        field.sdf_full(h.x, &s, &h.n, nullptr);
        h.n = h.n.normalized();
        return h;
    };

    double prev_t = t, prev_s = 0;
    bool have_prev = false;
    double s = 0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        s = field.sdf(ray.at(t));
        if (!std::isfinite(s)) throw NumericalFault("sphere_trace: non-finite SDF value");
        if (std::abs(s) <= cfg.eps_hit) return finish(t, true);
        if (s < 0 && have_prev) {
            // Crossed the surface: bracketed secant refinement.
            double lo = prev_t, hi = t, slo = prev_s, shi = s;
            for (int it = 0; it < 64; ++it) {
                double tm = (std::abs(shi - slo) > 1e-300)
                                ? lo + (hi - lo) * slo / (slo - shi)
                                : 0.5 * (lo + hi);
                tm = clampd(tm, lo, hi);
                if (tm == lo || tm == hi) tm = 0.5 * (lo + hi);
                double sm = field.sdf(ray.at(tm));
                if (std::abs(sm) <= cfg.eps_hit) return finish(tm, true);
                if (sm > 0) {
                    lo = tm;
                    slo = sm;
                } else {
                    hi = tm;
                    shi = sm;
                }
                if (hi - lo < 1e-14) break;
            }
            return finish(0.5 * (lo + hi), std::abs(field.sdf(ray.at(0.5 * (lo + hi)))) <=
                                               cfg.grazing_factor * cfg.eps_hit);
        }
        prev_t = t;
        prev_s = s;
        have_prev = true;
        t += s * cfg.relax;
        if (t > t_end) return miss;
    }
    // Grazing rays rarely converge fully; accept them if close.
    if (std::abs(s) <= cfg.grazing_factor * cfg.eps_hit) return finish(t, false);
    return miss;
}

SurfaceHit sphere_trace(const SdfField& field, const Camera& cam, const Vec2& pixel,
                        const TraceConfig& cfg) {
    return trace_ray(field, cam.ray_through(pixel), cfg);
}

Imaged sobel_magnitude(const Imaged& depth) {
    const int w = depth.width, h = depth.height;
    Imaged mag(w, h, 1);
    // Replicated borders: the image frame itself is not a depth edge.
    auto at = [&](int x, int y) {
        return depth.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2 * at(x - 1, y) + 2 * at(x + 1, y) -
                        at(x - 1, y + 1) + at(x + 1, y + 1);
            double gy = -at(x - 1, y - 1) - 2 * at(x, y - 1) - at(x + 1, y - 1) +
                        at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1);
            // 1/8 normalization: units of depth per pixel
            mag.at(x, y) = std::sqrt(gx * gx + gy * gy) / 8.0;
        }
    return mag;
}

Maskimg dilate1(const Maskimg& m) {
    const int w = m.width, h = m.height;
    Maskimg out(w, h, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y)) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < w && yy < h) out.at(xx, yy) = 1;
                }
        }
    return out;
}

GeomBuffers render_geom_buffers_region(const SdfField& field, const Camera& cam,
                                       const TraceConfig& cfg, int x0, int y0, int w, int h,
                                       bool parallel) {
    GeomBuffers g;
    g.width = w;
    g.height = h;
    g.x0 = x0;
    g.y0 = y0;
    g.depth = Imaged(w, h, 1, cfg.miss_depth);
    g.normal = Imaged(w, h, 3, 0.0);
    g.hit_mask = Maskimg(w, h, 1, 0);

    auto body = [&](int64_t idx) {
        const int px = int(idx % w), py = int(idx / w);
        Vec2 pixel{x0 + px + 0.5, y0 + py + 0.5};
        SurfaceHit hit = sphere_trace(field, cam, pixel, cfg);
        if (hit.hit) {
            g.depth.at(px, py) = hit.t;
            g.hit_mask.at(px, py) = 1;
            for (int c = 0; c < 3; ++c) g.normal.at(px, py, c) = hit.n[c];
        }
    };
    if (parallel)
        parallel_for(int64_t(w) * h, body);
    else
        serial_for(int64_t(w) * h, body);

    Imaged mag = sobel_magnitude(g.depth);
    Maskimg near_hit = dilate1(g.hit_mask);
    g.discontinuity = Maskimg(w, h, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            g.discontinuity.at(x, y) = (mag.at(x, y) > cfg.sobel_tau && near_hit.at(x, y)) ? 1 : 0;
    return g;
}

GeomBuffers render_geom_buffers(const SdfField& field, const Camera& cam, const TraceConfig& cfg,
                                bool parallel) {
    return render_geom_buffers_region(field, cam, cfg, 0, 0, cam.width, cam.height, parallel);
}

void dump_geom_buffers(const std::string& dir, const GeomBuffers& g) {
    Imagef depth(g.width, g.height, 1), normal(g.width, g.height, 3), hit(g.width, g.height, 1),
        disc(g.width, g.height, 1);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            depth.at(x, y) = float(g.depth.at(x, y));
            hit.at(x, y) = float(g.hit_mask.at(x, y));
            disc.at(x, y) = float(g.discontinuity.at(x, y));
            for (int c = 0; c < 3; ++c) normal.at(x, y, c) = float(g.normal.at(x, y, c));
        }
    save_pfm(dir + "/depth.pfm", depth);
    save_pfm(dir + "/normal.pfm", normal);
    save_pfm(dir + "/hit.pfm", hit);
    save_pfm(dir + "/disc.pfm", disc);
}

}  // namespace invrend
