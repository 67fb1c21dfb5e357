#include "doctest.h"
#include "invrend/losses.hpp"

using namespace invrend;

namespace {
Imaged random_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Imaged img(w, h, 3);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

// Independent straightforward pyramid implementation (same documented
// conventions: [1 4 6 4 1]/16, replicated border, even-index decimation).
double reference_pyramid_l2(const Imaged& a, const Imaged& b, int levels) {
    const double k[5] = {1, 4, 6, 4, 1};
    auto blur_ds = [&](std::vector<std::vector<double>>& chans, int& w, int& h) {
        for (auto& img : chans) {
            std::vector<double> t1(img.size()), t2(img.size());
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0;
                    for (int i = -2; i <= 2; ++i)
                        s += k[i + 2] / 16.0 * img[y * w + std::clamp(x + i, 0, w - 1)];
                    t1[y * w + x] = s;
                }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0;
                    for (int i = -2; i <= 2; ++i)
                        s += k[i + 2] / 16.0 * t1[std::clamp(y + i, 0, h - 1) * w + x];
                    t2[y * w + x] = s;
                }
            const int ow = (w + 1) / 2, oh = (h + 1) / 2;
            std::vector<double> d(size_t(ow) * oh);
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) d[y * ow + x] = t2[(2 * y) * w + 2 * x];
            img = d;
        }
        w = (w + 1) / 2;
        h = (h + 1) / 2;
    };
    std::vector<std::vector<double>> ca(3), cb(3);
    for (int c = 0; c < 3; ++c) {
        ca[c].resize(a.pixels());
        cb[c].resize(a.pixels());
        for (size_t i = 0; i < a.pixels(); ++i) {
            ca[c][i] = a.data[i * 3 + c];
            cb[c][i] = b.data[i * 3 + c];
        }
    }
    int wa = a.width, ha = a.height, wb = a.width, hb = a.height;
    double total = 0;
    for (int l = 0; l < levels; ++l) {
        if (l > 0) {
            blur_ds(ca, wa, ha);
            blur_ds(cb, wb, hb);
        }
        double mse = 0;
        size_t n = 0;
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < ca[c].size(); ++i) {
                mse += sqr(ca[c][i] - cb[c][i]);
                ++n;
            }
        total += mse / double(n);
    }
    return total;
}

// Direct sliding-window SSIM (no separable tricks).
double reference_ssim(const Imaged& a, const Imaged& b) {
    const double c1 = 1e-4, c2 = 9e-4;
    std::vector<double> k(11);
    double ksum = 0;
    for (int i = 0; i < 11; ++i) {
        k[i] = std::exp(-0.5 * sqr((i - 5) / 1.5));
        ksum += k[i];
    }
    for (double& v : k) v /= ksum;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        double acc = 0;
        int n = 0;
        for (int cy = 5; cy < a.height - 5; ++cy)
            for (int cx = 5; cx < a.width - 5; ++cx) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        double w = k[dy + 5] * k[dx + 5];
                        double va = a.at(cx + dx, cy + dy, c);
                        double vb = b.at(cx + dx, cy + dy, c);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++n;
            }
        total += acc / n;
    }
    return total / 3.0;
}
}  // namespace

TEST_CASE("pyramid L2: identity, constant offset, fault on tiny patches") {
    Imaged img = random_image(16, 16, 3);
    CHECK(pyramid_l2(img, img, 4) == 0.0);

    Imaged shifted = img;
    for (double& v : shifted.data) v += 0.1;
    CHECK(pyramid_l2(img, shifted, 1) == doctest::Approx(0.01).epsilon(1e-9));

    Imaged tiny = random_image(4, 4, 5);
    CHECK_THROWS(pyramid_l2(tiny, tiny, 4));
    Imaged other = random_image(8, 16, 5);
    CHECK_THROWS(pyramid_l2(img, other, 2));
}

TEST_CASE("pyramid L2 matches an independent reimplementation") {
    Imaged a = random_image(21, 17, 7);
    Imaged b = random_image(21, 17, 8);
    CHECK(std::abs(pyramid_l2(a, b, 4) - reference_pyramid_l2(a, b, 4)) < 1e-10);
}

TEST_CASE("pyramid L2 tape recording matches the primal value and gradients") {
    const int w = 12, h = 10;
    Imaged target = random_image(w, h, 11);
    std::vector<double> params(size_t(w) * h * 3);
    Rng rng(12);
    for (double& p : params) p = rng.uniform();

    GradientTape t(&params);
    std::array<NodeId, 3> chans;
    for (int c = 0; c < 3; ++c) chans[c] = t.param_vec(c * w * h, w * h);
    NodeId loss = record_pyramid_l2(t, chans, w, h, target, 3);

    Imaged a(w, h, 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < w * h; ++i) a.data[size_t(i) * 3 + c] = params[c * w * h + i];
    CHECK(t.scalar(loss) == doctest::Approx(pyramid_l2(a, target, 3)).epsilon(1e-12));

    t.backward_scalar(loss);
    std::vector<double> grad = t.param_gradient();
    for (int i = 0; i < 25; ++i) {
        size_t idx = rng.below(params.size());
        const double h_fd = 1e-6, saved = params[idx];
        params[idx] = saved + h_fd;
        t.replay();
        double lp = t.scalar(loss);
        params[idx] = saved - h_fd;
        t.replay();
        double lm = t.scalar(loss);
        params[idx] = saved;
        double fd = (lp - lm) / (2 * h_fd);
        CHECK(std::abs(fd - grad[idx]) < 1e-6 * (std::abs(fd) + std::abs(grad[idx])) + 1e-9);
    }
}

TEST_CASE("SSIM loss: identity, inverted checkerboard, continuity") {
    Imaged img = random_image(16, 16, 13);
    CHECK(ssim_loss(img, img) == doctest::Approx(0.0).epsilon(1e-12));

    Imaged cb(16, 16, 3), inv(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = double((x + y) % 2);
                cb.at(x, y, c) = v;
                inv.at(x, y, c) = 1.0 - v;
            }
    const double loss = ssim_loss(cb, inv);
    CHECK(loss > 1.8);
    CHECK(loss <= 2.0);
    // Reference agreement on random and structured pairs.
    CHECK(std::abs(ssim(cb, inv) - reference_ssim(cb, inv)) < 1e-9);
    Imaged a = random_image(18, 14, 17), b = random_image(18, 14, 18);
    CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) < 1e-9);

    Imaged noisy = img;
    Rng rng(19);
    for (double& v : noisy.data) v += 1e-6 * rng.normal();
    CHECK(ssim_loss(img, noisy) < 1e-4);
}

TEST_CASE("SSIM tape recording matches the primal value") {
    const int w = 14, h = 12;
    Imaged target = random_image(w, h, 23);
    std::vector<double> params(size_t(w) * h * 3);
    Rng rng(24);
    for (double& p : params) p = rng.uniform();
    GradientTape t(&params);
    std::array<NodeId, 3> chans;
    for (int c = 0; c < 3; ++c) chans[c] = t.param_vec(c * w * h, w * h);
    NodeId loss = record_ssim_loss(t, chans, w, h, target);
    Imaged a(w, h, 3);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < w * h; ++i) a.data[size_t(i) * 3 + c] = params[c * w * h + i];
    CHECK(t.scalar(loss) == doctest::Approx(ssim_loss(a, target)).epsilon(1e-12));

    t.backward_scalar(loss);
    std::vector<double> grad = t.param_gradient();
    for (int i = 0; i < 20; ++i) {
        size_t idx = rng.below(params.size());
        const double h_fd = 1e-6, saved = params[idx];
        params[idx] = saved + h_fd;
        t.replay();
        double lp = t.scalar(loss);
        params[idx] = saved - h_fd;
        t.replay();
        double lm = t.scalar(loss);
        params[idx] = saved;
        double fd = (lp - lm) / (2 * h_fd);
        CHECK(std::abs(fd - grad[idx]) < 1e-6 * (std::abs(fd) + std::abs(grad[idx])) + 1e-9);
    }
}

TEST_CASE("eikonal loss on analytic fields") {
    SphereSdf sphere({0, 0, 0}, 1.0);
    Rng rng(29);
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(rng.unitVector() * rng.uniform(0.1, 1.0));
    CHECK(eikonal_loss(sphere, pts) == doctest::Approx(0.0).epsilon(1e-12));

    ScaledSdf doubled(&sphere, 2.0);
    CHECK(eikonal_loss(doubled, pts) == doctest::Approx(1.0).epsilon(1e-12));

    // Rotation invariance for rotationally symmetric fields.
    const double ang = 0.7;
    std::vector<Vec3> rotated;
    for (const Vec3& p : pts)
        rotated.push_back({p.x * std::cos(ang) - p.y * std::sin(ang),
                           p.x * std::sin(ang) + p.y * std::cos(ang), p.z});
    CHECK(eikonal_loss(doubled, rotated) == doctest::Approx(eikonal_loss(doubled, pts)));
}

TEST_CASE("eikonal tape recording matches the primal value") {
    FieldConfig fc;
    fc.sdf = {2, 32, 1, 6, 100.0};
    fc.diffuse = {2, 16, -1, 10, 20.0};
    fc.specular = {2, 16, -1, 6, 20.0};
    fc.roughness = {2, 16, -1, 6, 20.0};
    fc.feature_dim = 4;
    FieldStack field(fc);
    Rng rng(31);
    std::vector<Vec3> pts;
    for (int i = 0; i < 16; ++i) pts.push_back(rng.unitVector() * rng.uniform(0.1, 0.9));
    GradientTape t(&field.params());
    NodeId loss = record_eikonal_loss(t, field, pts);
    CHECK(t.scalar(loss) == doctest::Approx(eikonal_loss(field, pts)).epsilon(1e-12));
}

TEST_CASE("roughness hinge values") {
    std::vector<double> a{0.3};
    CHECK(roughness_hinge(a) == 0.0);
    a = {0.7};
    CHECK(roughness_hinge(a) == doctest::Approx(0.2).epsilon(1e-12));
    a = {0.4, 0.6};
    CHECK(roughness_hinge(a) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("tone curve is monotone and anchored at zero") {
    ToneConfig tc;
    CHECK(tone_map(0.0, tc) == 0.0);
    double prev = -1;
    for (double v = 0; v < 5.0; v += 0.01) {
        double t = tone_map(v, tc);
        CHECK(t >= prev);
        prev = t;
    }
    // Clamp region is flat.
    CHECK(tone_map(4.5, tc) == tone_map(6.0, tc));
}

TEST_CASE("psnr basics") {
    Imaged a = random_image(8, 8, 37);
    CHECK(std::isinf(psnr(a, a)));
    Imaged b = a;
    for (double& v : b.data) v += 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
}
