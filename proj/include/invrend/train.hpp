#pragma once

#include "invrend/optimizer.hpp"
#include "invrend/volrend.hpp"

namespace invrend {

struct TrainConfig {
    double lambda_eik = 0.1;       // eikonal weight
    double lambda_rough = 0.1;     // roughness range weight
    int patch_size = 64;           // power of two
    int pyramid_levels = 4;
    int iters_stage2 = 3000;
    double lr_fields = 5e-4;
    double lr_light = 1e-2;
    bool cosine_decay = true;
    uint64_t seed = 1;
    int eik_uniform = 512;
    int eik_surface = 512;
    int rough_points = 128;
    ToneConfig tone;
    bool optimize_light = true;
    bool auto_light_init = true;   // match mean brightness before training
    int grad_chunks = 16;
    int checkpoint_every = 500;
    std::string out_dir;

    void validate() const;
};

struct LossBreakdown {
    double pyramid_l2 = 0;
    double ssim_term = 0;
    double eikonal = 0;
    double roughness_range = 0;
    double total = 0;
};

struct TrainResult {
    bool ok = true;
    std::string message;
    int iters_done = 0;
    LossBreakdown last;
};

// Initializes L so the mean predicted brightness of a few interior points
// matches the dataset's mean observed brightness.
void init_light_from_dataset(FieldStack& field, const Dataset& ds, const RenderOptions& opts,
                             uint64_t seed);

// Edge-aware surface-rendering stage: per iteration renders a random patch
// of a random training view, applies the pyramid-L2 + SSIM + eikonal +
// roughness loss and one Adam step over all field parameters and L.
// Metrics stream is newline-delimited JSON.
TrainResult train_stage2(FieldStack& field, const Dataset& ds, const TrainConfig& cfg,
                         const RenderOptions& opts, std::ostream* metrics = nullptr);

// One full differentiable loss evaluation on a fixed patch: geometry traced
// once, everything recorded on a single replayable tape. Used by gradcheck
// and the unit suites.
struct LossTape {
    GradientTape tape;
    NodeId loss = kNoNode;
    LossBreakdown values;
};
void build_patch_loss_tape(LossTape& out, FieldStack& field, const Dataset& ds, int view_index,
                           int px0, int py0, int patch, const TrainConfig& cfg,
                           const RenderOptions& opts);

struct GradCheckReport {
    double max_rel_err = 0;
    int checked = 0;
    int worst_index = -1;
    double loss = 0;
    bool pass(double tol = 1e-3) const { return checked > 0 && max_rel_err <= tol; }
};

// Central finite differences (h, double precision) of the recorded loss via
// tape replay against the reverse-mode gradient, over `num_coords` sampled
// coordinates stratified across the four nets and the light intensity.
// Relative error uses max(|ad|+|fd|, 1e-6) as the denominator.
GradCheckReport gradcheck_stage2(FieldStack& field, const Dataset& ds, const TrainConfig& cfg,
                                 const RenderOptions& opts, int patch = 16, int num_coords = 256,
                                 double h = 1e-5, uint64_t seed = 7);

// Silhouette IoU between the field's hit mask and a reference mask.
double silhouette_iou(const SdfField& field, const Camera& cam, const TraceConfig& tc,
                      const Maskimg& target_mask);
Maskimg hit_mask_of(const SdfField& field, const Camera& cam, const TraceConfig& tc);

}  // namespace invrend
