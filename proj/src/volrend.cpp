#include "invrend/volrend.hpp"

#include <chrono>
#include <map>

#include "invrend/optimizer.hpp"
#include "invrend/parallel.hpp"

namespace invrend {

namespace {

double log_sigmoid(double z) {
    return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

bool clip_to_bound(const Ray& ray, double radius, double* t0, double* t1) {
    const double b = ray.o.dot(ray.d);
    const double c = ray.o.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc <= 0) return false;
    const double sq = std::sqrt(disc);
    *t0 = std::max(-b - sq, 0.0);
    *t1 = -b + sq;
    return *t1 > *t0;
}

}  // namespace

void sdf_to_weights(std::span<const double> s, double sharpness, std::vector<double>& alpha,
                    std::vector<double>& weight) {
    const int n = int(s.size());
    alpha.assign(std::max(0, n - 1), 0.0);
    weight.assign(std::max(0, n - 1), 0.0);
    double transmittance = 1.0;
    for (int i = 0; i + 1 < n; ++i) {
        const double ratio = std::exp(log_sigmoid(sharpness * s[i + 1]) -
                                      log_sigmoid(sharpness * s[i]));
        alpha[i] = clampd(1.0 - ratio, 0.0, 1.0);
        weight[i] = alpha[i] * transmittance;
        transmittance *= 1.0 - alpha[i];
    }
}

RaySamples volume_render(const FieldStack& field, const Camera& cam, const Vec2& pixel,
                         double sharpness, int n, Rng& rng, const VolrendConfig& cfg) {
    if (n < 2) throw std::invalid_argument("volume_render: need at least two samples");
    if (!(sharpness > 0)) throw std::invalid_argument("volume_render: sharpness must be > 0");
    RaySamples out;
    Ray ray = cam.ray_through(pixel);
    double t0, t1;
    if (!clip_to_bound(ray, cfg.bound_radius, &t0, &t1)) return out;

    auto stratified = [&](double lo, double hi, int count) {
        for (int i = 0; i < count; ++i)
            out.t.push_back(lo + (hi - lo) * (i + rng.uniform()) / count);
    };
    stratified(t0, t1, n);
    if (cfg.n_importance > 0) {
        // One refinement pass around the current weight peak.
        out.s.resize(out.t.size());
        for (size_t i = 0; i < out.t.size(); ++i) out.s[i] = field.sdf(ray.at(out.t[i]));
        sdf_to_weights(out.s, sharpness, out.alpha, out.weight);
        int peak = 0;
        for (size_t i = 1; i < out.weight.size(); ++i)
            if (out.weight[i] > out.weight[peak]) peak = int(i);
        const double spacing = (t1 - t0) / n;
        stratified(std::max(t0, out.t[peak] - 2 * spacing),
                   std::min(t1, out.t[peak] + 2 * spacing), cfg.n_importance);
        std::sort(out.t.begin(), out.t.end());
    }
    out.s.resize(out.t.size());
    for (size_t i = 0; i < out.t.size(); ++i) out.s[i] = field.sdf(ray.at(out.t[i]));
    sdf_to_weights(out.s, sharpness, out.alpha, out.weight);

    out.rgb = {0, 0, 0};
    std::vector<double> feat;
    for (size_t i = 0; i < out.weight.size(); ++i) {
        out.opacity += out.weight[i];
        out.depth += out.weight[i] * out.t[i];
        if (out.weight[i] <= 1e-12) continue;
        Vec3 x = ray.at(out.t[i]);
        double s;
        Vec3 g;
        field.sdf_full(x, &s, &g, &feat);
        Vec3 nrm = g.normalized();
        out.rgb += out.weight[i] * field.radiance(x, nrm, -ray.d, feat);
    }
    return out;
}

// ---------------------------------------------------------------------------

Stage1Result stage1_fit(FieldStack& field, const Dataset& ds, const VolrendConfig& vcfg,
                        const Stage1Config& cfg, std::ostream* metrics) {
    Stage1Result result;
    if (ds.views.size() < 2) {
        result.ok = false;
        result.message = "stage1_fit: need at least two views";
        return result;
    }
    auto& params = field.params();
    const int P = int(params.size());

    double log_s = std::log(vcfg.s_init);
    Adam opt_params, opt_s;
    opt_params.reset(P);
    opt_s.reset(1);

    // Only the sdf and diffuse nets (plus sharpness) train in stage 1.
    std::vector<double> lr_mask(P, 0.0);
    auto set_range = [&](FieldStack::Range r, double v) {
        for (int i = r.off; i < r.off + r.len; ++i) lr_mask[i] = v;
    };

    const std::vector<int>& train_views =
        ds.train_indices.empty() ? std::vector<int>{} : ds.train_indices;
    std::vector<int> all_views(ds.views.size());
    for (size_t i = 0; i < all_views.size(); ++i) all_views[i] = int(i);
    const std::vector<int>& views = train_views.empty() ? all_views : train_views;

    const int chunks = std::max(1, cfg.grad_chunks);
    std::vector<std::vector<double>> chunk_grad(chunks, std::vector<double>(P, 0.0));
    std::vector<double> chunk_sgrad(chunks, 0.0);
    std::vector<double> chunk_loss(chunks, 0.0);

    auto t_start = std::chrono::steady_clock::now();
    for (int iter = 0; iter < cfg.iters; ++iter) {
        Rng rit = Rng(cfg.seed).fork(iter);
        const CaptureView& view = ds.views[views[rit.below(views.size())]];
        const Camera& cam = view.camera;
        const double sharpness = std::exp(log_s);

        struct RayTask {
            Vec2 pixel;
            Vec3 target;
        };
        std::vector<RayTask> rays(cfg.rays_per_iter);
        for (int r = 0; r < cfg.rays_per_iter; ++r) {
            int px = int(rit.below(uint64_t(cam.width)));
            int py = int(rit.below(uint64_t(cam.height)));
            rays[r].pixel = {px + 0.5, py + 0.5};
            rays[r].target = {view.image.at(px, py, 0), view.image.at(px, py, 1),
                              view.image.at(px, py, 2)};
        }

        for (auto& g : chunk_grad) std::fill(g.begin(), g.end(), 0.0);
        std::fill(chunk_sgrad.begin(), chunk_sgrad.end(), 0.0);
        std::fill(chunk_loss.begin(), chunk_loss.end(), 0.0);

        // Per-ray candidate surface points, collected deterministically.
        std::vector<Vec3> surf_cand(cfg.rays_per_iter, Vec3{0, 0, 0});
        std::vector<uint8_t> surf_ok(cfg.rays_per_iter, 0);
        const double ray_seed = 1.0 / (3.0 * cfg.rays_per_iter);

        parallel_chunks(cfg.rays_per_iter, chunks, [&](int chunk, int64_t rb, int64_t re) {
            GradientTape tape(&params);
            std::vector<double> svals;
            std::vector<double> alpha, weight;
            for (int64_t r = rb; r < re; ++r) {
                Rng rray = Rng(cfg.seed).fork(iter * 1315423911ULL + r + 1);
                Ray ray = cam.ray_through(rays[r].pixel);
                double t0, t1;
                if (!clip_to_bound(ray, vcfg.bound_radius, &t0, &t1)) continue;
                const int n = vcfg.n_samples;
                std::vector<double> ts(n);
                for (int i = 0; i < n; ++i)
                    ts[i] = t0 + (t1 - t0) * (i + rray.uniform()) / n;
                svals.resize(n);
                for (int i = 0; i < n; ++i) svals[i] = field.sdf(ray.at(ts[i]));
                sdf_to_weights(svals, sharpness, alpha, weight);

                double wmax = 0, wsum = 0, dsum = 0;
                for (size_t i = 0; i < weight.size(); ++i) {
                    wmax = std::max(wmax, weight[i]);
                    wsum += weight[i];
                    dsum += weight[i] * ts[i];
                }
                const double target_lum =
                    rays[r].target.x + rays[r].target.y + rays[r].target.z;
                if (wmax < 1e-5 && target_lum < 1e-4) continue;  // dark-on-dark

                if (wsum > 0.5) {
                    surf_cand[r] = ray.at(dsum / wsum);
                    surf_ok[r] = 1;
                }

                // Select the intervals that carry the tape.
                std::vector<int> order(weight.size());
                for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
                std::stable_sort(order.begin(), order.end(),
                                 [&](int a, int b) { return weight[a] > weight[b]; });
                std::vector<int> selected;
                for (int idx : order) {
                    if (weight[idx] < vcfg.weight_cut ||
                        int(selected.size()) >= vcfg.max_tape_samples)
                        break;
                    selected.push_back(idx);
                }
                if (selected.empty()) continue;
                std::sort(selected.begin(), selected.end());

                tape.reset();
                tape.bind(&params);
                NodeId s_in = tape.input(std::span<const double>(&sharpness, 1));

                // SDF nodes at the unique sample points the tape needs.
                std::map<int, NodeId> s_nodes;
                std::map<int, FieldStack::SdfNodes> full_nodes;
                for (int idx : selected) {
                    if (!full_nodes.count(idx)) {
                        FieldStack::SdfNodes sn =
                            field.record_sdf_full(tape, tape.constant3(ray.at(ts[idx])));
                        full_nodes[idx] = sn;
                        s_nodes[idx] = sn.s;
                    }
                    if (!s_nodes.count(idx + 1))
                        s_nodes[idx + 1] =
                            field.record_sdf_value(tape, tape.constant3(ray.at(ts[idx + 1])));
                }
                auto logsig_node = [&](NodeId sv) {
                    NodeId z = tape.mul(sv, s_in);
                    return tape.scale_shift(tape.softplus_k(tape.scale_shift(z, -1.0), 1.0),
                                            -1.0);
                };
                std::map<int, NodeId> ls;
                for (auto& [idx, sv] : s_nodes) ls[idx] = logsig_node(sv);

                TapeCtx ctx{&tape};
                TVec3 rgb = ctx.vec3({0, 0, 0});
                // Transmittance: tape factors for selected intervals,
                // detached constants for the rest.
                double const_trans = 1.0;
                TScal tape_trans = ctx.scalar(1.0);
                size_t sel_pos = 0;
                for (size_t i = 0; i < weight.size(); ++i) {
                    const bool is_sel =
                        sel_pos < selected.size() && selected[sel_pos] == int(i);
                    if (!is_sel) {
                        const_trans *= 1.0 - alpha[i];
                        continue;
                    }
                    ++sel_pos;
                    NodeId ratio = tape.exp_(tape.sub(ls[int(i) + 1], ls[int(i)]));
                    TScal a{&tape, tape.clamp(tape.scale_shift(ratio, -1.0, 1.0), 0.0, 1.0)};
                    TScal w = a * tape_trans * const_trans;
                    const auto& sn = full_nodes[int(i)];
                    TVec3 grad{&tape, sn.grad};
                    TVec3 nrm = normalized(grad);
                    NodeId c = field.record_radiance(tape, tape.constant3(ray.at(ts[i])),
                                                     nrm.id, tape.constant3(-ray.d),
                                                     sn.feature);
                    rgb = rgb + TVec3{&tape, c} * w;
                    tape_trans = tape_trans * (1.0 - a);
                }

                // Tone-mapped L1 against the capture.
                NodeId toned = record_tone(tape, rgb.id, cfg.tone);
                Vec3 toned_target{tone_map(rays[r].target.x, cfg.tone),
                                  tone_map(rays[r].target.y, cfg.tone),
                                  tone_map(rays[r].target.z, cfg.tone)};
                NodeId l1 =
                    tape.sum(tape.abs_(tape.sub(toned, tape.constant3(toned_target))));
                chunk_loss[chunk] += tape.scalar(l1) * ray_seed;
                tape.backward_scalar(l1, ray_seed);
                const auto& g = tape.param_gradient();
                auto& cg = chunk_grad[chunk];
                for (int i = 0; i < P; ++i) cg[i] += g[i];
                chunk_sgrad[chunk] += tape.grad(s_in)[0] * sharpness;  // d/dlog_s
            }
        });

        // Eikonal points: uniform in the bound plus perturbed surface points.
        std::vector<Vec3> eik_points;
        {
            Rng reik = Rng(cfg.seed).fork(0x9e11ULL + iter);
            for (int i = 0; i < cfg.eik_uniform; ++i)
                eik_points.push_back(reik.unitVector() *
                                     (vcfg.bound_radius * std::cbrt(reik.uniform())));
            int taken = 0;
            for (int r = 0; r < cfg.rays_per_iter && taken < cfg.eik_surface; ++r) {
                if (!surf_ok[r]) continue;
                ++taken;
                eik_points.push_back(surf_cand[r] +
                                     Vec3{reik.normal(), reik.normal(), reik.normal()} * 0.02);
            }
        }
        double eik_value = 0;
        {
            std::vector<double> eik_chunk(chunks, 0.0);
            parallel_chunks(int64_t(eik_points.size()), chunks,
                            [&](int chunk, int64_t b, int64_t e) {
                                GradientTape tape(&params);
                                std::span<const Vec3> pts(eik_points.data() + b, size_t(e - b));
                                NodeId loss = record_eikonal_loss(tape, field, pts);
                                const double scale =
                                    cfg.lambda_eik * double(e - b) / double(eik_points.size());
                                eik_chunk[chunk] = tape.scalar(loss) * scale;
                                tape.backward_scalar(loss, scale);
                                const auto& g = tape.param_gradient();
                                auto& cg = chunk_grad[chunk];
                                for (int i = 0; i < P; ++i) cg[i] += g[i];
                            });
            for (double v : eik_chunk) eik_value += v;
        }

        double l1_value = 0;
        for (double v : chunk_loss) l1_value += v;
        const double total = l1_value + eik_value;
        result.final_loss = total;
        result.iters_done = iter + 1;
        result.sharpness = std::exp(log_s);

        if (!std::isfinite(total)) {
            if (!cfg.out_dir.empty())
                field.save_checkpoint(cfg.out_dir + "/stage1_abort.ckpt", {{"log_s", log_s}});
            result.ok = false;
            result.message = "stage1_fit: non-finite loss at iteration " +
                             std::to_string(iter) + "; aborted with checkpoint";
            return result;
        }

        // Deterministic reduction in chunk order.
        std::vector<double> grad(P, 0.0);
        double sgrad = 0;
        for (int c = 0; c < chunks; ++c) {
            const auto& cg = chunk_grad[c];
            for (int i = 0; i < P; ++i) grad[i] += cg[i];
            sgrad += chunk_sgrad[c];
        }

        const double lr = cfg.cosine_decay ? cosine_decay(iter, cfg.iters, cfg.lr) : cfg.lr;
        set_range(field.sdf_range(), lr);
        set_range(field.diffuse_range(), lr);
        opt_params.step(params, grad, lr_mask);
        double sarr[1] = {log_s};
        double sg[1] = {sgrad};
        double slr[1] = {lr};
        opt_s.step(std::span<double>(sarr, 1), std::span<const double>(sg, 1),
                   std::span<const double>(slr, 1));
        log_s = sarr[0];

        if (metrics) {
            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_start)
                                  .count();
            (*metrics) << "{\"iter\":" << iter << ",\"l1\":" << l1_value
                       << ",\"eikonal\":" << eik_value << ",\"total\":" << total
                       << ",\"s\":" << std::exp(log_s) << ",\"wall_ms\":" << ms << "}\n";
        }
        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
            (iter + 1) % cfg.checkpoint_every == 0)
            field.save_checkpoint(cfg.out_dir + "/stage1.ckpt", {{"log_s", log_s}});
    }
    if (!cfg.out_dir.empty() && cfg.iters > 0)
        field.save_checkpoint(cfg.out_dir + "/stage1.ckpt", {{"log_s", log_s}});
    result.sharpness = std::exp(log_s);
    return result;
}

}  // namespace invrend
