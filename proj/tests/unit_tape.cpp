#include <cstring>
#include <functional>

#include "doctest.h"
#include "invrend/mlp.hpp"
#include "invrend/tape.hpp"

using namespace invrend;

namespace {

// Central-difference check of d(loss)/d(theta) via tape replay. The
// absolute floor covers cancellation noise on parameters whose gradient is
// below what central differences can resolve.
void fd_check(std::vector<double> params,
              const std::function<NodeId(GradientTape&)>& build, double h = 1e-6,
              double tol = 1e-5) {
    GradientTape t(&params);
    NodeId loss = build(t);
    REQUIRE(t.length(loss) == 1);
    t.backward_scalar(loss);
    std::vector<double> grad = t.param_gradient();
    const double noise_floor = 1e-9 * std::max(1.0, std::abs(t.scalar(loss))) / (h / 1e-6);
    for (size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        t.replay();
        const double lp = t.scalar(loss);
        params[i] = saved - h;
        t.replay();
        const double lm = t.scalar(loss);
        params[i] = saved;
        const double fd = (lp - lm) / (2 * h);
        INFO("param ", i, " analytic ", grad[i], " fd ", fd);
        CHECK(std::abs(fd - grad[i]) <
              tol * (std::abs(fd) + std::abs(grad[i])) + noise_floor);
    }
    t.replay();  // restore recorded values
}

}  // namespace

TEST_CASE("gradient of a single picked parameter is the indicator vector") {
    std::vector<double> params = {0.3, -1.2, 2.5, 0.07};
    GradientTape t(&params);
    NodeId p = t.param_vec(2, 1);
    t.backward_scalar(p);
    const auto& g = t.param_gradient();
    CHECK(g == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("two backward passes over the same tape are bitwise identical") {
    std::vector<double> params(20);
    Rng rng(7);
    for (auto& p : params) p = rng.normal();
    GradientTape t(&params);
    NodeId x = t.param_vec(0, 10);
    NodeId w = t.param_vec(10, 10);
    NodeId loss = t.sum(t.mul(t.softplus_k(x, 3.0), t.sin_(w)));
    t.backward_scalar(loss);
    std::vector<double> g1 = t.param_gradient();
    t.backward_scalar(loss);
    std::vector<double> g2 = t.param_gradient();
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("seed shape mismatch faults") {
    std::vector<double> params = {1.0, 2.0};
    GradientTape t(&params);
    NodeId v = t.param_vec(0, 2);
    double bad[3] = {1, 1, 1};
    CHECK_THROWS(t.backward(v, std::span<const double>(bad, 3)));
}

TEST_CASE("squared norm of a 2-layer MLP matches finite differences") {
    MlpSpec spec;
    spec.name = "toy";
    spec.in_dim = 3;
    spec.width = 8;
    spec.depth = 2;
    spec.out_dim = 2;
    spec.skip_layer = -1;
    spec.act_k = 10.0;
    int n = spec.layout(0);
    std::vector<double> params(n);
    Rng rng(11);
    init_he(rng, spec, params);

    fd_check(params, [&](GradientTape& t) {
        double xin[3] = {0.2, -0.4, 0.7};
        NodeId x = t.constant(std::span<const double>(xin, 3));
        NodeId out = spec.record(t, x);
        return t.dot(out, out);
    }, 1e-6, 1e-6);
}

TEST_CASE("elementwise and reduction ops match finite differences") {
    std::vector<double> params = {0.4, -0.3, 0.9, 1.7, -0.8, 0.25, 0.6, -1.1};
    fd_check(params, [&](GradientTape& t) {
        NodeId a = t.param_vec(0, 4);
        NodeId b = t.param_vec(4, 4);
        NodeId v = t.mul(t.sin_(a), t.cos_(b));
        v = t.add(v, t.square(b));
        v = t.sub(v, t.scale_shift(a, 0.3, 0.1));
        v = t.div(v, t.scale_shift(t.square(b), 1.0, 1.0));
        v = t.add_scaled(v, 0.7, t.softplus_k(a, 5.0), 0.3);
        v = t.mul(v, t.sigmoid_k(b, 2.0));
        NodeId s = t.dot(v, a);
        NodeId parts = t.norm(t.concat(std::array<NodeId, 2>{v, a}));
        return t.add(t.mean(v), t.add(s, parts));
    });
}

TEST_CASE("scalar broadcast, exp/log/pow/sqrt/abs/clamp ops match finite differences") {
    std::vector<double> params = {0.8, 1.3, 0.45, 2.2, 0.9};
    fd_check(params, [&](GradientTape& t) {
        NodeId a = t.param_vec(0, 4);
        NodeId s = t.param_vec(4, 1);
        NodeId v = t.mul(a, s);                 // broadcast
        v = t.exp_(t.scale_shift(v, 0.3));
        v = t.log_(v);
        v = t.pow_const(t.scale_shift(v, 0.25, 1.5), 1.0 / 2.2);
        v = t.sqrt_(v);
        v = t.abs_(t.scale_shift(v, 1.0, -0.5));
        v = t.clamp(v, 0.01, 10.0);
        NodeId w = t.acos_clamp(t.scale_shift(t.sigmoid_k(a, 1.0), 0.9, -0.2));
        return t.add(t.sum(v), t.mean(w));
    });
}

TEST_CASE("slice, pack_scaled and matvec match finite differences") {
    MlpSpec spec;
    spec.name = "m";
    spec.in_dim = 5;
    spec.width = 7;
    spec.depth = 1;
    spec.out_dim = 3;
    spec.skip_layer = -1;
    spec.act_k = 20.0;
    int n = spec.layout(0);
    std::vector<double> params(n + 5);
    Rng rng(3);
    init_he(rng, spec, params);
    for (int i = 0; i < 5; ++i) params[n + i] = rng.normal();

    fd_check(params, [&](GradientTape& t) {
        NodeId x = t.param_vec(n, 5);
        NodeId out = spec.record(t, x);
        NodeId s0 = t.slice(out, 0, 2);
        PackEntry entries[3] = {{s0, 0, 0, 2.0}, {s0, 1, 1, -1.0}, {kNoNode, 0, 1, 0.4}};
        NodeId packed = t.pack_scaled(entries, 2);
        return t.dot(packed, packed);
    }, 1e-6, 1e-6);
}

TEST_CASE("image ops (conv, downsample, crop) match finite differences") {
    const int w = 6, h = 5;
    std::vector<double> params(w * h);
    Rng rng(5);
    for (auto& p : params) p = rng.uniform();
    const double ker[3] = {0.25, 0.5, 0.25};
    fd_check(params, [&](GradientTape& t) {
        NodeId img = t.param_vec(0, w * h);
        NodeId b = t.conv_cols(t.conv_rows(img, w, h, std::span<const double>(ker, 3)), w, h,
                               std::span<const double>(ker, 3));
        NodeId d = t.down2(b, w, h);
        NodeId c = t.crop2(b, w, h, 1, 1, 4, 3);
        return t.add(t.mean(t.square(d)), t.mean(t.square(c)));
    });
}

TEST_CASE("replay reproduces recorded values exactly") {
    std::vector<double> params = {0.5, -0.25, 1.5};
    GradientTape t(&params);
    NodeId a = t.param_vec(0, 3);
    NodeId v = t.softplus_k(t.sin_(a), 7.0);
    NodeId loss = t.sum(v);
    const double before = t.scalar(loss);
    t.replay();
    CHECK(t.scalar(loss) == before);
}
