#pragma once

#include "invrend/edges.hpp"
#include "invrend/tape_math.hpp"

namespace invrend {

struct BrdfParams {
    Vec3 beta;        // diffuse albedo, linear RGB
    Vec3 kappa;       // specular albedo
    double alpha_r;   // roughness in (0,1)
    double int_ior = 1.49;
    double ext_ior = 1.000277;
    void validate() const;
};

struct ShadeConfig {
    enum class Model { Roughplastic, PlainGgxLambert } model = Model::Roughplastic;
    double int_ior = 1.49;
    double ext_ior = 1.000277;
    bool flip_backfacing = true;
    Vec3 background{0, 0, 0};
    // Known-color experiment: every surface point shades to a constant, so
    // image gradients exist only through the edge weights.
    bool known_color = false;
    Vec3 known_color_rgb{0.75, 0.75, 0.75};

    double eta() const { return int_ior / ext_ior; }
};

// GGX normal distribution with the linear roughness-to-width mapping a = alpha_r.
double ggx_D(double ndoth, double a);

// Diffuse Fresnel reflectance fit (Egan & Hilgeman) used by the layered model.
double fresnel_diffuse_reflectance(double eta);

// ---------------------------------------------------------------------------
// Templated shading math, instantiated for doubles and tape nodes.

template <class S>
S fresnel_dielectric_t(S cos_i, double eta) {
    S c = cos_i;
    S sin_t2 = (1.0 - c * c) * (1.0 / (eta * eta));
    S cos_t = sqrt_s(1.0 - sin_t2);
    S rs = (c - eta * cos_t) / (c + eta * cos_t);
    S rp = (eta * c - cos_t) / (eta * c + cos_t);
    return (rs * rs + rp * rp) * 0.5;
}

template <class S>
S smith_g1_t(S c, S a2) {
    return 2.0 * c / (c + sqrt_s(a2 + (1.0 - a2) * (c * c)));
}

// Microfacet reflectance; reciprocal in (wi, wo). Back-facing wi gives zero.
template <class Ctx>
typename Ctx::V3 eval_brdf_t(const Ctx& ctx, const ShadeConfig& cfg, typename Ctx::V3 beta,
                             typename Ctx::V3 kappa, typename Ctx::S alpha, typename Ctx::V3 wo,
                             typename Ctx::V3 wi, typename Ctx::V3 n) {
    using S = typename Ctx::S;
    S cos_i = dot(n, wi);
    S cos_o = dot(n, wo);
    if (value_of(cos_i) <= 0.0 || value_of(cos_o) <= 0.0) return ctx.vec3({0, 0, 0});
    const double eta = cfg.eta();

    typename Ctx::V3 h = normalized(wi + wo);
    S ndoth = dot(n, h);
    S a2 = alpha * alpha;
    S dd = (ndoth * ndoth) * (a2 - 1.0) + 1.0;
    S D = a2 / ((dd * dd) * kPi);
    S G = smith_g1_t(cos_i, a2) * smith_g1_t(cos_o, a2);
    S F = fresnel_dielectric_t(dot(wi, h), eta);
    typename Ctx::V3 spec = kappa * (D * F * G / (4.0 * cos_i * cos_o));

    typename Ctx::V3 diffuse = beta * (1.0 / kPi);
    if (cfg.model == ShadeConfig::Model::Roughplastic) {
        const double fdr = fresnel_diffuse_reflectance(1.0 / eta);
        const double inv_eta2 = 1.0 / (eta * eta);
        S t12 = 1.0 - fresnel_dielectric_t(cos_i, eta);
        S t21 = 1.0 - fresnel_dielectric_t(cos_o, eta);
        diffuse = diffuse * (t12 * t21 * (inv_eta2 / (1.0 - fdr)));
    }
    return spec + diffuse;
}

// Collocated point light: L_o = L/dist^2 * f_r(w,w) * (w . n).
template <class Ctx>
typename Ctx::V3 shade_collocated_t(const Ctx& ctx, const ShadeConfig& cfg, typename Ctx::S light,
                                    typename Ctx::V3 x, typename Ctx::V3 n, const Vec3& cam_origin,
                                    typename Ctx::V3 beta, typename Ctx::V3 kappa,
                                    typename Ctx::S alpha) {
    using S = typename Ctx::S;
    typename Ctx::V3 d = ctx.vec3(cam_origin) - x;
    S dist2 = dot(d, d);
    typename Ctx::V3 w = d / sqrt_s(dist2);
    S cosw = dot(w, n);
    if (value_of(cosw) <= 0.0) return ctx.vec3(cfg.background);
    typename Ctx::V3 fr = eval_brdf_t(ctx, cfg, beta, kappa, alpha, w, w, n);
    return fr * ((light / dist2) * cosw);
}

// Fraction of the pixel-footprint circle on the anti-normal side of the
// edge line. signed_offset = sqrt(2) * (du,dv) . (uv - center).
template <class S>
S segment_weight_t(S signed_offset) {
    S alpha_seg = 2.0 * acos_clamp_s(signed_offset);
    return 1.0 - (alpha_seg - sin_s(alpha_seg)) * (0.5 / kPi);
}

inline double segment_weight(double signed_offset) { return segment_weight_t(signed_offset); }

// Primal BRDF entry point (spec surface).
Vec3 eval_brdf(const BrdfParams& p, const Vec3& wo, const Vec3& wi, const Vec3& n,
               ShadeConfig::Model model = ShadeConfig::Model::Roughplastic);

// ---------------------------------------------------------------------------
// Renderer

enum class PixelKind : uint8_t { Miss, Interior, Edge };

struct ShadedPixel {
    Vec3 color;
    PixelKind kind = PixelKind::Miss;
    double w_a = -1.0;  // edge pixels only
};

struct PixelGeom {
    PixelKind kind = PixelKind::Miss;
    SurfaceHit hit;           // interior
    EdgePoint edge;           // edge
    SurfaceHit hit_a, hit_b;  // side rays of an edge pixel
};

struct RenderOptions {
    TraceConfig trace;
    EdgeWalkConfig walk;
    ShadeConfig shade;
    bool edges_enabled = true;
    bool parallel = true;
};

struct RenderResult {
    int x0 = 0, y0 = 0, width = 0, height = 0;
    Imaged image;  // linear RGB
    std::vector<ShadedPixel> pixels;
    std::vector<PixelGeom> geom;
    std::vector<EdgePoint> edges;
    GeomBuffers buffers;
};

// Edge-aware collocated rendering of an image region. Buffers are traced
// with a one-pixel apron so edge detection behaves the same at region
// boundaries.
RenderResult render_region(const SdfField& field, const MaterialSource& mats, double light,
                           const Camera& cam, const RenderOptions& opts, int x0, int y0, int w,
                           int h);
RenderResult render_image(const SdfField& field, const MaterialSource& mats, double light,
                          const Camera& cam, const RenderOptions& opts);

// Primal shading of one surface hit (used by the renderer and the bakers).
Vec3 shade_hit(const SdfField& field, const MaterialSource& mats, double light,
               const ShadeConfig& cfg, const Vec3& cam_origin, const SurfaceHit& hit);

// ---------------------------------------------------------------------------
// Tape recording (training / gradient checks). Falls back to a constant node
// when a pixel has no differentiable path (miss, singular reparam).

NodeId record_pixel_color(GradientTape& t, const FieldStack& field, const ShadeConfig& cfg,
                          const Camera& cam, const PixelGeom& geom);

}  // namespace invrend
