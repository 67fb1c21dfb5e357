#include "invrend/losses.hpp"

namespace invrend {

double tone_map(double v, const ToneConfig& tc) {
    const double inv_g = 1.0 / tc.gamma;
    return std::pow(clampd(v, 0.0, tc.clamp_max) + tc.eps, inv_g) - std::pow(tc.eps, inv_g);
}

Imaged tone_map_image(const Imaged& img, const ToneConfig& tc) {
    Imaged out = img;
    for (double& v : out.data) v = tone_map(v, tc);
    return out;
}

NodeId record_tone(GradientTape& t, NodeId img, const ToneConfig& tc) {
    const double inv_g = 1.0 / tc.gamma;
    NodeId c = t.clamp(img, 0.0, tc.clamp_max);
    NodeId p = t.pow_const(t.scale_shift(c, 1.0, tc.eps), inv_g);
    return t.scale_shift(p, 1.0, -std::pow(tc.eps, inv_g));
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kPyrKernel[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Single-channel helpers operating on w*h vectors.
std::vector<double> blur5(const std::vector<double>& in, int w, int h, bool rows) {
    std::vector<double> out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = -2; k <= 2; ++k) {
                int xx = rows ? std::clamp(x + k, 0, w - 1) : x;
                int yy = rows ? y : std::clamp(y + k, 0, h - 1);
                s += kPyrKernel[k + 2] * in[yy * w + xx];
            }
            out[y * w + x] = s;
        }
    return out;
}

std::vector<double> down2v(const std::vector<double>& in, int w, int h) {
    const int ow = (w + 1) / 2, oh = (h + 1) / 2;
    std::vector<double> out(size_t(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out[y * ow + x] = in[(2 * y) * w + 2 * x];
    return out;
}

std::vector<double> channel_of(const Imaged& img, int c) {
    std::vector<double> v(img.pixels());
    for (size_t i = 0; i < v.size(); ++i) v[i] = img.data[i * img.channels + c];
    return v;
}

void check_pyramid_pre(const Imaged& a, const Imaged& b, int levels) {
    if (!a.sameShape(b)) throw std::invalid_argument("pyramid_l2: shape mismatch");
    if (levels < 1) throw std::invalid_argument("pyramid_l2: need at least one level");
    const int need = 1 << (levels - 1);
    if (a.width < need || a.height < need)
        throw std::invalid_argument("pyramid_l2: patch smaller than 2^(levels-1)");
}

}  // namespace

double pyramid_l2(const Imaged& a, const Imaged& b, int levels) {
    check_pyramid_pre(a, b, levels);
    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> pa = channel_of(a, c), pb = channel_of(b, c);
        int w = a.width, h = a.height;
        for (int l = 0; l < levels; ++l) {
            if (l > 0) {
                pa = down2v(blur5(blur5(pa, w, h, true), w, h, false), w, h);
                pb = down2v(blur5(blur5(pb, w, h, true), w, h, false), w, h);
                w = (w + 1) / 2;
                h = (h + 1) / 2;
            }
            double mse = 0;
            for (size_t i = 0; i < pa.size(); ++i) mse += sqr(pa[i] - pb[i]);
            total += mse / (double(pa.size()) * a.channels);
        }
    }
    return total;
}

NodeId record_pyramid_l2(GradientTape& t, const std::array<NodeId, 3>& a_channels, int w, int h,
                         const Imaged& b, int levels) {
    Imaged dummy(w, h, 3);
    check_pyramid_pre(dummy, b, levels);
    std::span<const double> ker(kPyrKernel, 5);
    NodeId total = kNoNode;
    for (int c = 0; c < 3; ++c) {
        NodeId pa = a_channels[c];
        std::vector<double> pb = channel_of(b, c);
        int lw = w, lh = h;
        for (int l = 0; l < levels; ++l) {
            if (l > 0) {
                pa = t.down2(t.conv_cols(t.conv_rows(pa, lw, lh, ker), lw, lh, ker), lw, lh);
                pb = down2v(blur5(blur5(pb, lw, lh, true), lw, lh, false), lw, lh);
                lw = (lw + 1) / 2;
                lh = (lh + 1) / 2;
            }
            NodeId diff = t.sub(pa, t.constant(pb));
            NodeId mse = t.scale_shift(t.mean(t.square(diff)), 1.0 / 3.0);
            total = total == kNoNode ? mse : t.add(total, mse);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const int r = size / 2;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-0.5 * sqr((i - r) / sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

std::vector<double> conv_sep(const std::vector<double>& in, int w, int h,
                             const std::vector<double>& k) {
    std::vector<double> tmp(in.size()), out(in.size());
    const int r = int(k.size()) / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int i = -r; i <= r; ++i) s += k[i + r] * in[y * w + std::clamp(x + i, 0, w - 1)];
            tmp[y * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
            out[y * w + x] = s;
        }
    return out;
}

}  // namespace

double ssim(const Imaged& a, const Imaged& b, double dynamic_range) {
    if (!a.sameShape(b)) throw std::invalid_argument("ssim: shape mismatch");
    const double c1 = sqr(0.01 * dynamic_range), c2 = sqr(0.03 * dynamic_range);
    const int w = a.width, h = a.height;

    if (w < 11 || h < 11) {
        // Global statistics fallback for tiny images.
        double result = 0;
        for (int c = 0; c < a.channels; ++c) {
            auto pa = channel_of(a, c), pb = channel_of(b, c);
            double ma = 0, mb = 0;
            for (size_t i = 0; i < pa.size(); ++i) {
                ma += pa[i];
                mb += pb[i];
            }
            ma /= pa.size();
            mb /= pb.size();
            double va = 0, vb = 0, cov = 0;
            for (size_t i = 0; i < pa.size(); ++i) {
                va += sqr(pa[i] - ma);
                vb += sqr(pb[i] - mb);
                cov += (pa[i] - ma) * (pb[i] - mb);
            }
            va /= pa.size();
            vb /= pb.size();
            cov /= pa.size();
            result += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                      ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        return result / a.channels;
    }

    const auto ker = gaussian_kernel(11, 1.5);
    const int m = 5;  // window interior margin
    double result = 0;
    for (int c = 0; c < a.channels; ++c) {
        auto pa = channel_of(a, c), pb = channel_of(b, c);
        std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
        for (size_t i = 0; i < pa.size(); ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        auto mu_a = conv_sep(pa, w, h, ker), mu_b = conv_sep(pb, w, h, ker);
        auto s_aa = conv_sep(aa, w, h, ker), s_bb = conv_sep(bb, w, h, ker),
             s_ab = conv_sep(ab, w, h, ker);
        double acc = 0;
        int n = 0;
        for (int y = m; y < h - m; ++y)
            for (int x = m; x < w - m; ++x) {
                const size_t i = size_t(y) * w + x;
                const double va = s_aa[i] - mu_a[i] * mu_a[i];
                const double vb = s_bb[i] - mu_b[i] * mu_b[i];
                const double cov = s_ab[i] - mu_a[i] * mu_b[i];
                acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                       ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
                ++n;
            }
        result += acc / n;
    }
    return result / a.channels;
}

NodeId record_ssim_loss(GradientTape& t, const std::array<NodeId, 3>& a_channels, int w, int h,
                        const Imaged& b, double dynamic_range) {
    if (w < 11 || h < 11)
        throw std::invalid_argument("record_ssim_loss: image smaller than the SSIM window");
    const double c1 = sqr(0.01 * dynamic_range), c2 = sqr(0.03 * dynamic_range);
    const auto kerv = gaussian_kernel(11, 1.5);
    std::span<const double> ker(kerv);
    const int m = 5;
    auto G = [&](NodeId img) { return t.conv_cols(t.conv_rows(img, w, h, ker), w, h, ker); };
    NodeId mean_ssim = kNoNode;
    for (int c = 0; c < 3; ++c) {
        NodeId pa = a_channels[c];
        NodeId pb = t.constant(channel_of(b, c));
        NodeId mu_a = G(pa), mu_b = G(pb);
        NodeId s_aa = G(t.square(pa)), s_bb = G(t.square(pb)), s_ab = G(t.mul(pa, pb));
        NodeId va = t.sub(s_aa, t.square(mu_a));
        NodeId vb = t.sub(s_bb, t.square(mu_b));
        NodeId cov = t.sub(s_ab, t.mul(mu_a, mu_b));
        NodeId num = t.mul(t.scale_shift(t.mul(mu_a, mu_b), 2.0, c1),
                           t.scale_shift(cov, 2.0, c2));
        NodeId den = t.mul(t.scale_shift(t.add(t.square(mu_a), t.square(mu_b)), 1.0, c1),
                           t.scale_shift(t.add(va, vb), 1.0, c2));
        NodeId ssim_map = t.crop2(t.div(num, den), w, h, m, m, w - 2 * m, h - 2 * m);
        NodeId per_c = t.scale_shift(t.mean(ssim_map), 1.0 / 3.0);
        mean_ssim = mean_ssim == kNoNode ? per_c : t.add(mean_ssim, per_c);
    }
    return t.scale_shift(mean_ssim, -1.0, 1.0);  // 1 - SSIM
}

// ---------------------------------------------------------------------------

double eikonal_loss(const SdfField& field, std::span<const Vec3> points) {
    double acc = 0;
    for (const Vec3& p : points) acc += sqr(field.sdf_grad(p).norm() - 1.0);
    return points.empty() ? 0.0 : acc / double(points.size());
}

NodeId record_eikonal_loss(GradientTape& t, const FieldStack& field,
                           std::span<const Vec3> points) {
    NodeId acc = kNoNode;
    const double inv_n = points.empty() ? 0.0 : 1.0 / double(points.size());
    for (const Vec3& p : points) {
        FieldStack::SdfNodes sn = field.record_sdf_full(t, t.constant3(p));
        NodeId term = t.square(t.scale_shift(t.norm(sn.grad), 1.0, -1.0));
        term = t.scale_shift(term, inv_n);
        acc = acc == kNoNode ? term : t.add(acc, term);
    }
    return acc == kNoNode ? t.constant(0.0) : acc;
}

double roughness_hinge(std::span<const double> alphas) {
    if (alphas.empty()) return 0.0;
    double acc = 0;
    for (double a : alphas) acc += std::max(a - 0.5, 0.0);
    return acc / double(alphas.size());
}

NodeId record_roughness_loss(GradientTape& t, const FieldStack& field,
                             std::span<const Vec3> points, std::span<const Vec3> normals) {
    if (points.empty()) return t.constant(0.0);
    NodeId acc = kNoNode;
    const double inv_n = 1.0 / double(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        NodeId x = t.constant3(points[i]);
        NodeId n = t.constant3(normals[i]);
        FieldStack::SdfNodes sn = field.record_sdf_full(t, x);
        FieldStack::MaterialNodes mn = field.record_materials(t, x, n, n, sn.feature);
        NodeId hinge = t.clamp(t.scale_shift(mn.alpha, 1.0, -0.5), 0.0, 1.0);
        acc = acc == kNoNode ? t.scale_shift(hinge, inv_n)
                             : t.add(acc, t.scale_shift(hinge, inv_n));
    }
    return acc;
}

double psnr(const Imaged& a, const Imaged& b, double peak) {
    if (!a.sameShape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0;
    for (size_t i = 0; i < a.data.size(); ++i) mse += sqr(a.data[i] - b.data[i]);
    mse /= double(a.data.size());
    if (mse <= 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace invrend
