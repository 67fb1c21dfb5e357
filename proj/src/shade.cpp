#include "invrend/shade.hpp"

#include "invrend/parallel.hpp"

namespace invrend {

void BrdfParams::validate() const {
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(alpha_r)) throw std::invalid_argument("BrdfParams: roughness outside (0,1)");
    for (double v : {beta.x, beta.y, beta.z, kappa.x, kappa.y, kappa.z})
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("BrdfParams: albedo outside [0,1]");
    if (!(int_ior > ext_ior) || !(ext_ior >= 1.0))
        throw std::invalid_argument("BrdfParams: need int_ior > ext_ior >= 1");
}

double ggx_D(double ndoth, double a) {
    const double a2 = a * a;
    const double d = ndoth * ndoth * (a2 - 1.0) + 1.0;
    return a2 / (kPi * d * d);
}

double fresnel_diffuse_reflectance(double eta) {
    if (eta < 1.0)
        return -1.4399 * (eta * eta) + 0.7099 * eta + 0.6681 + 0.0636 / eta;
    // d'Eon & Irving fit for eta > 1
    const double ie = 1.0 / eta;
    double ie2 = ie * ie, ie3 = ie2 * ie, ie4 = ie3 * ie, ie5 = ie4 * ie;
    return 0.919317 - 3.4793 * ie + 6.75335 * ie2 - 7.80989 * ie3 + 4.98554 * ie4 -
           1.36881 * ie5;
}

Vec3 eval_brdf(const BrdfParams& p, const Vec3& wo, const Vec3& wi, const Vec3& n,
               ShadeConfig::Model model) {
    p.validate();
    ShadeConfig cfg;
    cfg.model = model;
    cfg.int_ior = p.int_ior;
    cfg.ext_ior = p.ext_ior;
    PrimalCtx ctx;
    return eval_brdf_t(ctx, cfg, p.beta, p.kappa, p.alpha_r, wo, wi, n);
}

// ---------------------------------------------------------------------------

namespace {

// Shading evaluates geometry and materials at the Newton-corrected point
// x - dir * S(x), the same point the differentiable reparametrization uses.
struct ShadePoint {
    Vec3 x, n;
    std::vector<double> feature;
    bool ok = false;
};

ShadePoint shading_point(const SdfField& field, const Vec3& cam_origin, const SurfaceHit& hit,
                         bool flip_backfacing) {
    ShadePoint sp;
    double s;
    Vec3 g;
    field.sdf_full(hit.x, &s, &g, nullptr);
    const Vec3 v = cam_origin - hit.x;
    const double denom = g.dot(v);
    if (std::abs(denom) < 1e-9 * v.norm()) return sp;  // grazing, dropped
    sp.x = hit.x - (v / denom) * s;
    Vec3 g2;
    field.sdf_full(sp.x, &s, &g2, &sp.feature);
    const double gn = g2.norm();
    if (gn < 1e-9) return sp;
    sp.n = g2 / gn;
    if (flip_backfacing && sp.n.dot(v) < 0) sp.n = -sp.n;
    sp.ok = true;
    return sp;
}

}  // namespace

Vec3 shade_hit(const SdfField& field, const MaterialSource& mats, double light,
               const ShadeConfig& cfg, const Vec3& cam_origin, const SurfaceHit& hit) {
    if (cfg.known_color) return cfg.known_color_rgb;
    ShadePoint sp = shading_point(field, cam_origin, hit, cfg.flip_backfacing);
    if (!sp.ok) return cfg.background;
    MaterialSample m = mats.eval(sp.x, sp.n, sp.feature);
    PrimalCtx ctx;
    return shade_collocated_t(ctx, cfg, light, sp.x, sp.n, cam_origin, m.beta, m.kappa,
                              m.alpha_r);
}

namespace {

ShadedPixel shade_edge_pixel(const SdfField& field, const MaterialSource& mats, double light,
                             const Camera& cam, const RenderOptions& opts, const EdgePoint& e,
                             PixelGeom* geom) {
    const Vec2 center{e.px + 0.5, e.py + 0.5};
    const double off = std::sqrt(2.0) * e.uv_normal.dot(e.uv - center);
    const double wa = segment_weight(off);
    const double r = std::sqrt(2.0) / 2.0;
    // A sits on the anti-normal (object) side: the side whose area fraction
    // w_A measures. B is diametrically opposite.
    const Vec2 pa = center - r * e.uv_normal;
    const Vec2 pb = center + r * e.uv_normal;
    SurfaceHit ha = sphere_trace(field, cam, pa, opts.trace);
    SurfaceHit hb = sphere_trace(field, cam, pb, opts.trace);
    Vec3 ca = ha.hit ? shade_hit(field, mats, light, opts.shade, cam.origin(), ha)
                     : opts.shade.background;
    Vec3 cb = hb.hit ? shade_hit(field, mats, light, opts.shade, cam.origin(), hb)
                     : opts.shade.background;
    ShadedPixel out;
    out.kind = PixelKind::Edge;
    out.w_a = wa;
    out.color = wa * ca + (1.0 - wa) * cb;
    if (geom) {
        geom->kind = PixelKind::Edge;
        geom->edge = e;
        geom->hit_a = ha;
        geom->hit_b = hb;
    }
    return out;
}

}  // namespace

RenderResult render_region(const SdfField& field, const MaterialSource& mats, double light,
                           const Camera& cam, const RenderOptions& opts, int x0, int y0, int w,
                           int h) {
    RenderResult res;
    res.x0 = x0;
    res.y0 = y0;
    res.width = w;
    res.height = h;
    // One-pixel apron so the Sobel mask at region borders sees real
    // neighbors; only in-region pixels are shaded.
    const int ax0 = x0 - 1, ay0 = y0 - 1, aw = w + 2, ah = h + 2;
    GeomBuffers apron =
        render_geom_buffers_region(field, cam, opts.trace, ax0, ay0, aw, ah, opts.parallel);
    if (opts.edges_enabled)
        res.edges = find_edge_points(field, cam, apron, opts.trace, opts.walk, opts.parallel);

    // Crop buffers to the region.
    GeomBuffers& g = res.buffers;
    g.width = w;
    g.height = h;
    g.x0 = x0;
    g.y0 = y0;
    g.depth = Imaged(w, h, 1, opts.trace.miss_depth);
    g.normal = Imaged(w, h, 3, 0.0);
    g.hit_mask = Maskimg(w, h, 1, 0);
    g.discontinuity = Maskimg(w, h, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            g.depth.at(x, y) = apron.depth.at(x + 1, y + 1);
            g.hit_mask.at(x, y) = apron.hit_mask.at(x + 1, y + 1);
            g.discontinuity.at(x, y) = apron.discontinuity.at(x + 1, y + 1);
            for (int c = 0; c < 3; ++c) g.normal.at(x, y, c) = apron.normal.at(x + 1, y + 1, c);
        }

    res.image = Imaged(w, h, 3, 0.0);
    res.pixels.assign(size_t(w) * h, {});
    res.geom.assign(size_t(w) * h, {});

    // Edge ownership map (points outside the region were already dropped by
    // find_edge_points against the apron; re-filter to the region proper).
    std::vector<const EdgePoint*> owner(size_t(w) * h, nullptr);
    std::vector<EdgePoint> kept;
    kept.reserve(res.edges.size());
    for (const auto& e : res.edges) {
        const int lx = e.px - x0, ly = e.py - y0;
        if (lx < 0 || ly < 0 || lx >= w || ly >= h) continue;
        kept.push_back(e);
    }
    res.edges = std::move(kept);
    for (const auto& e : res.edges) owner[size_t(e.py - y0) * w + (e.px - x0)] = &e;

    auto body = [&](int64_t idx) {
        const int lx = int(idx % w), ly = int(idx / w);
        ShadedPixel& px = res.pixels[idx];
        PixelGeom& pg = res.geom[idx];
        if (const EdgePoint* e = owner[idx]) {
            px = shade_edge_pixel(field, mats, light, cam, opts, *e, &pg);
        } else if (g.hit_mask.at(lx, ly)) {
            SurfaceHit hit;
            hit.hit = true;
            hit.converged = true;
            hit.t = g.depth.at(lx, ly);
            hit.x = cam.ray_through({x0 + lx + 0.5, y0 + ly + 0.5}).at(hit.t);
            hit.n = {g.normal.at(lx, ly, 0), g.normal.at(lx, ly, 1), g.normal.at(lx, ly, 2)};
            px.kind = PixelKind::Interior;
            px.color = shade_hit(field, mats, light, opts.shade, cam.origin(), hit);
            pg.kind = PixelKind::Interior;
            pg.hit = hit;
        } else {
            px.kind = PixelKind::Miss;
            px.color = opts.shade.background;
        }
        for (int c = 0; c < 3; ++c) res.image.at(lx, ly, c) = px.color[c];
    };
    if (opts.parallel)
        parallel_for(int64_t(w) * h, body);
    else
        serial_for(int64_t(w) * h, body);
    return res;
}

RenderResult render_image(const SdfField& field, const MaterialSource& mats, double light,
                          const Camera& cam, const RenderOptions& opts) {
    return render_region(field, mats, light, cam, opts, 0, 0, cam.width, cam.height);
}

// ---------------------------------------------------------------------------
// Tape recording

namespace {

NodeId record_interior_color(GradientTape& t, const FieldStack& field, const ShadeConfig& cfg,
                             const Vec3& cam_origin, const SurfaceHit& hit) {
    if (cfg.known_color) return t.constant3(cfg.known_color_rgb);
    double s0;
    Vec3 g0;
    field.sdf_full(hit.x, &s0, &g0, nullptr);
    auto xq = record_reparam_interior(t, field, cam_origin, hit.x, g0);
    if (!xq) return kNoNode;
    TVec3 x{&t, *xq};
    FieldStack::SdfNodes sn = field.record_sdf_full(t, *xq);
    TVec3 grad{&t, sn.grad};
    TVec3 n = normalized(grad);
    const bool flip = cfg.flip_backfacing && g0.dot(cam_origin - hit.x) < 0;
    if (flip) n = -n;
    FieldStack::MaterialNodes mn = field.record_materials(t, *xq, n.id, n.id, sn.feature);
    TapeCtx ctx{&t};
    TScal light{&t, field.record_light(t)};
    TVec3 color = shade_collocated_t(ctx, cfg, light, x, n, cam_origin, TVec3{&t, mn.beta},
                                     TVec3{&t, mn.kappa}, TScal{&t, mn.alpha});
    return color.id;
}

NodeId record_edge_color(GradientTape& t, const FieldStack& field, const ShadeConfig& cfg,
                         const Camera& cam, const PixelGeom& pg) {
    const EdgePoint& e = pg.edge;
    auto xq = record_reparam_edge(t, field, e.x, e.grad);
    if (!xq) return kNoNode;
    TVec3 x{&t, *xq};

    // Pinhole projection on tape (camera is constant).
    TapeCtx ctx{&t};
    Mat3 rt = cam.rot.transposed();
    TVec3 rel = x - ctx.vec3(cam.pos);
    TScal xc = dot(ctx.vec3({rt(0, 0), rt(0, 1), rt(0, 2)}), rel);
    TScal yc = dot(ctx.vec3({rt(1, 0), rt(1, 1), rt(1, 2)}), rel);
    TScal zc = dot(ctx.vec3({rt(2, 0), rt(2, 1), rt(2, 2)}), rel);
    TScal u = xc / zc * cam.fx + cam.cx;
    TScal v = yc / zc * cam.fy + cam.cy;

    const double ucx = e.px + 0.5, ucy = e.py + 0.5;
    TScal off = ((u - ucx) * e.uv_normal.x + (v - ucy) * e.uv_normal.y) * std::sqrt(2.0);
    TScal wa = segment_weight_t(off);

    auto side_color = [&](const SurfaceHit& h) -> TVec3 {
        if (!h.hit) return ctx.vec3(cfg.background);
        NodeId c = record_interior_color(t, field, cfg, cam.origin(), h);
        if (c == kNoNode) return ctx.vec3(cfg.background);
        return TVec3{&t, c};
    };
    TVec3 ca = side_color(pg.hit_a);
    TVec3 cb = side_color(pg.hit_b);
    TVec3 color = ca * wa + cb * (1.0 - wa);
    return color.id;
}

}  // namespace

NodeId record_pixel_color(GradientTape& t, const FieldStack& field, const ShadeConfig& cfg,
                          const Camera& cam, const PixelGeom& geom) {
    switch (geom.kind) {
        case PixelKind::Interior: {
            NodeId c = record_interior_color(t, field, cfg, cam.origin(), geom.hit);
            if (c != kNoNode) return c;
            Vec3 fallback = shade_hit(field, field, field.light(), cfg, cam.origin(), geom.hit);
            return t.constant3(fallback);
        }
        case PixelKind::Edge: {
            NodeId c = record_edge_color(t, field, cfg, cam, geom);
            if (c != kNoNode) return c;
            return t.constant3(cfg.background);
        }
        case PixelKind::Miss:
            return t.constant3(cfg.background);
    }
    return kNoNode;
}

}  // namespace invrend
