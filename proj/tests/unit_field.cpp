#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "invrend/field.hpp"

using namespace invrend;

namespace {
FieldConfig tiny_config(uint64_t seed = 1) {
    FieldConfig c;
    c.sdf = {2, 32, 1, 6, 100.0};
    c.diffuse = {2, 32, -1, 10, 20.0};
    c.specular = {2, 32, -1, 6, 20.0};
    c.roughness = {2, 32, -1, 6, 20.0};
    c.feature_dim = 8;
    c.seed = seed;
    return c;
}
}  // namespace

TEST_CASE("positional encoding of the zero vector") {
    PositionalEncoding pe{6, true};
    double x[3] = {0, 0, 0};
    auto enc = encode(std::span<const double>(x, 3), pe);
    REQUIRE(int(enc.size()) == 3 * (1 + 2 * 6));
    for (int i = 0; i < 3; ++i) CHECK(enc[i] == 0.0);
    int off = 3;
    for (int j = 0; j < 6; ++j) {
        for (int c = 0; c < 3; ++c) CHECK(enc[off + c] == 0.0);        // sin
        for (int c = 0; c < 3; ++c) CHECK(enc[off + 3 + c] == 1.0);    // cos
        off += 6;
    }
}

TEST_CASE("zero-frequency encoding with include_input is the identity") {
    PositionalEncoding pe{0, true};
    double x[1] = {1.0};
    auto enc = encode(std::span<const double>(x, 1), pe);
    REQUIRE(enc.size() == 1);
    CHECK(enc[0] == 1.0);
}

TEST_CASE("encoding channels match a scalar reference evaluation") {
    PositionalEncoding pe{2, true};
    double x[1] = {0.5};
    auto enc = encode(std::span<const double>(x, 1), pe);
    REQUIRE(enc.size() == 5);
    CHECK(enc[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(enc[1] == doctest::Approx(std::sin(kPi * 0.5 * 1.0)).epsilon(1e-15));
    CHECK(enc[2] == doctest::Approx(std::cos(kPi * 0.5 * 1.0)).epsilon(1e-15));
    CHECK(enc[3] == doctest::Approx(std::sin(kPi * 0.5 * 2.0)).epsilon(1e-15));
    CHECK(enc[4] == doctest::Approx(std::cos(kPi * 0.5 * 2.0)).epsilon(1e-15));
}

TEST_CASE("analytic sphere adapter") {
    SphereSdf sphere({0, 0, 0}, 1.0);
    double s;
    Vec3 g;
    sphere.sdf_full({0, 0, 2}, &s, &g, nullptr);
    CHECK(s == doctest::Approx(1.0));
    CHECK(g.x == doctest::Approx(0.0));
    CHECK(g.z == doctest::Approx(1.0));

    // Unit gradient everywhere except the origin.
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Vec3 x = rng.unitVector() * rng.uniform(0.05, 2.0);
        CHECK(sphere.sdf_grad(x).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("analytic torus adapter: tube center is -r") {
    TorusSdf torus(1.0, 0.3);
    CHECK(torus.sdf({1, 0, 0}) == doctest::Approx(-0.3));
    CHECK(torus.sdf({0, 1, 0}) == doctest::Approx(-0.3));
    // On-surface point: ring circle pushed out by the tube radius.
    CHECK(torus.sdf({1.3, 0, 0}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("MLP spatial gradient matches central finite differences") {
    FieldStack field(tiny_config(17));
    Rng rng(5);
    const double h = 1e-4;
    for (int i = 0; i < 20; ++i) {
        Vec3 x = rng.unitVector() * rng.uniform(0.1, 0.9);
        double s;
        Vec3 g;
        field.sdf_full(x, &s, &g, nullptr);
        for (int k = 0; k < 3; ++k) {
            Vec3 xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            double fd = (field.sdf(xp) - field.sdf(xm)) / (2 * h);
            CHECK(std::abs(fd - g[k]) / std::max(1.0, std::abs(fd)) < 1e-3);
        }
    }
}

TEST_CASE("material outputs are strictly inside (0,1) for fuzzed parameters") {
    FieldStack field(tiny_config(23));
    Rng rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        for (auto& p : field.params()) p = 3.0 * rng.normal();
        std::vector<double> feat(field.feature_dim(), 0.1);
        for (int i = 0; i < 20; ++i) {
            Vec3 x = rng.unitVector() * 0.5;
            Vec3 n = rng.unitVector();
            MaterialSample m = field.eval(x, n, feat);
            for (double v : {m.beta.x, m.beta.y, m.beta.z, m.kappa.x, m.kappa.y, m.kappa.z,
                             m.alpha_r}) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        }
    }
}

TEST_CASE("distinct positions give distinct materials (positional encoding is live)") {
    FieldStack field(tiny_config(31));
    Rng rng(37);
    std::vector<double> feat(field.feature_dim(), 0.25);
    Vec3 n{0, 0, 1};
    int distinct = 0;
    for (int i = 0; i < 100; ++i) {
        Vec3 a = rng.unitVector() * 0.6;
        Vec3 b = rng.unitVector() * 0.6;
        MaterialSample ma = field.eval(a, n, feat);
        MaterialSample mb = field.eval(b, n, feat);
        if (std::abs(ma.beta.x - mb.beta.x) > 1e-9) ++distinct;
    }
    CHECK(distinct >= 99);
}

TEST_CASE("unit normal precondition is enforced") {
    FieldStack field(tiny_config(41));
    std::vector<double> feat(field.feature_dim(), 0.0);
    CHECK_THROWS_AS(field.eval({0, 0, 0.5}, {0, 0, 2.0}, feat), NumericalFault);
}

TEST_CASE("fixed parameters give identical outputs") {
    FieldStack field(tiny_config(43));
    Vec3 x{0.2, -0.1, 0.4};
    double s1 = field.sdf(x), s2 = field.sdf(x);
    CHECK(s1 == s2);
    double sa;
    Vec3 ga, gb;
    field.sdf_full(x, &sa, &ga, nullptr);
    field.sdf_full(x, &sa, &gb, nullptr);
    CHECK(ga.x == gb.x);
    CHECK(ga.y == gb.y);
    CHECK(ga.z == gb.z);
}

TEST_CASE("non-finite parameters fault with diagnostics") {
    FieldStack field(tiny_config(47));
    field.params()[10] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(field.sdf({0.1, 0.2, 0.3}), NumericalFault);
}

TEST_CASE("geometric initialization is an approximate sphere of the configured radius") {
    FieldConfig cfg;  // desk-size nets
    cfg.init_radius = 0.5;
    FieldStack field(cfg);
    CHECK(field.sdf({0, 0, 0}) < 0.0);
    Rng rng(7);
    for (int i = 0; i < 30; ++i) {
        Vec3 dir = rng.unitVector();
        CHECK(field.sdf(dir * 0.95) > 0.0);
        // Zero crossing near the configured radius.
        double lo = 0.0, hi = 0.95;
        for (int it = 0; it < 40; ++it) {
            double mid = 0.5 * (lo + hi);
            (field.sdf(dir * mid) < 0 ? lo : hi) = mid;
        }
        CHECK(std::abs(0.5 * (lo + hi) - 0.5) < 0.2);
    }
}

TEST_CASE("tape evaluation agrees with the primal path") {
    FieldStack field(tiny_config(53));
    GradientTape t(&field.params());
    Vec3 x{0.3, -0.2, 0.1};
    NodeId xn = t.constant3(x);
    FieldStack::SdfNodes sn = field.record_sdf_full(t, xn);
    double s;
    Vec3 g;
    std::vector<double> feat;
    field.sdf_full(x, &s, &g, &feat);
    CHECK(t.scalar(sn.s) == doctest::Approx(s).epsilon(1e-14));
    auto gv = t.value(sn.grad);
    for (int k = 0; k < 3; ++k) CHECK(gv[k] == doctest::Approx(g[k]).epsilon(1e-12));
    auto fv = t.value(sn.feature);
    for (int i = 0; i < int(feat.size()); ++i)
        CHECK(fv[i] == doctest::Approx(feat[i]).epsilon(1e-12));

    Vec3 n = g.normalized();
    NodeId nn = t.constant3(n);
    FieldStack::MaterialNodes mn = field.record_materials(t, xn, nn, nn, sn.feature);
    MaterialSample m = field.eval(x, n, feat);
    CHECK(t.value(mn.beta)[0] == doctest::Approx(m.beta.x).epsilon(1e-12));
    CHECK(t.value(mn.kappa)[2] == doctest::Approx(m.kappa.z).epsilon(1e-12));
    CHECK(t.scalar(mn.alpha) == doctest::Approx(m.alpha_r).epsilon(1e-12));
}

TEST_CASE("sdf parameter gradients match replay finite differences") {
    FieldStack field(tiny_config(59));
    GradientTape t(&field.params());
    NodeId xn = t.constant3({0.25, 0.1, -0.3});
    FieldStack::SdfNodes sn = field.record_sdf_full(t, xn);
    // Loss couples the value and the spatial gradient (eikonal-style).
    NodeId loss = t.add(t.square(sn.s), t.square(t.norm(sn.grad)));
    t.backward_scalar(loss);
    std::vector<double> grad = t.param_gradient();

    Rng rng(61);
    auto& params = field.params();
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        size_t i = rng.below(params.size());
        double saved = params[i];
        params[i] = saved + h;
        t.replay();
        double lp = t.scalar(loss);
        params[i] = saved - h;
        t.replay();
        double lm = t.scalar(loss);
        params[i] = saved;
        double fd = (lp - lm) / (2 * h);
        // 1e-9 absolute floor: central differences cannot resolve below the
        // cancellation noise of an O(1) loss at h = 1e-6.
        if (std::abs(fd - grad[i]) < 1e-4 * (std::abs(fd) + std::abs(grad[i])) + 1e-9) ++checked;
    }
    CHECK(checked >= 198);  // >= 99% of sampled coordinates
}

TEST_CASE("checkpoint round trip is bit-exact and layout mismatches fault") {
    FieldStack field(tiny_config(67));
    Rng rng(71);
    for (auto& p : field.params()) p = rng.normal();
    const std::string path = "/tmp/invrend_test_ckpt.bin";
    field.save_checkpoint(path, {{"log_s", 3.2}});

    FieldStack loaded(tiny_config(99));
    auto extras = loaded.load_checkpoint(path);
    CHECK(std::memcmp(loaded.params().data(), field.params().data(),
                      field.params().size() * sizeof(double)) == 0);
    CHECK(extras.at("log_s") == 3.2);

    FieldStack other(FieldConfig{});  // different architecture
    CHECK_THROWS(other.load_checkpoint(path));
    std::remove(path.c_str());
}
