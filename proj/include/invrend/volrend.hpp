#pragma once

#include <ostream>

#include "invrend/dataset.hpp"
#include "invrend/losses.hpp"

namespace invrend {

struct VolrendConfig {
    int n_samples = 64;       // stratified samples inside the bound
    int n_importance = 0;     // optional refinement pass near the weight peak
    double s_init = 20.0;     // logistic sharpness, trained via log(s)
    double bound_radius = 1.0;
    // gradient sparsification for the training tape
    double weight_cut = 1e-4;
    int max_tape_samples = 16;
};

struct Stage1Config {
    int iters = 5000;
    int rays_per_iter = 512;
    double lr = 5e-4;
    double lr_light = 0.0;        // light is untouched in stage 1
    double lambda_eik = 0.1;
    int eik_uniform = 512;
    int eik_surface = 512;
    uint64_t seed = 1;
    bool cosine_decay = true;
    ToneConfig tone;
    int grad_chunks = 16;
    int checkpoint_every = 1000;
    std::string out_dir;          // empty: no checkpoints
};

// Per-ray compositing record (alphas from the clamped logistic-CDF ratio of
// consecutive SDF samples; weights are alpha-compositing transmittances).
struct RaySamples {
    std::vector<double> t;       // strictly increasing sample depths
    std::vector<double> s;       // SDF values
    std::vector<double> alpha;   // size n-1
    std::vector<double> weight;  // size n-1
    Vec3 rgb;
    double opacity = 0;
    double depth = 0;  // weighted mean depth
};

// Compositing math alone, usable with any SDF sample sequence.
void sdf_to_weights(std::span<const double> s, double sharpness, std::vector<double>& alpha,
                    std::vector<double>& weight);

// Full primal volume rendering of one pixel ray (radiance = diffuse net
// queried with the view direction).
RaySamples volume_render(const FieldStack& field, const Camera& cam, const Vec2& pixel,
                         double sharpness, int n, Rng& rng, const VolrendConfig& cfg);

struct Stage1Result {
    bool ok = true;
    std::string message;
    int iters_done = 0;
    double final_loss = 0;
    double sharpness = 0;
};

// Volumetric radiance optimization: recovers topology and initializes the
// SDF + diffuse nets for the surface stage. L1 image loss (tone-mapped) plus
// the eikonal term; Adam on the sdf/diffuse parameters and log sharpness.
Stage1Result stage1_fit(FieldStack& field, const Dataset& ds, const VolrendConfig& vcfg,
                        const Stage1Config& cfg, std::ostream* metrics = nullptr);

}  // namespace invrend
