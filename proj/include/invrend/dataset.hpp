#pragma once

#include <memory>

#include "invrend/shade.hpp"

namespace invrend {

struct CaptureView {
    Camera camera;
    std::string image_path;
    Imagef image;  // linear HDR RGB
};

struct Dataset {
    std::vector<CaptureView> views;
    double scene_scale = 1.0;  // scenes are normalized to the unit sphere
    std::vector<int> train_indices, test_indices;

    const CaptureView& view(int i) const { return views[i]; }
    int width() const { return views.empty() ? 0 : views[0].camera.width; }
    int height() const { return views.empty() ? 0 : views[0].camera.height; }
};

// cameras.json + images/view_%04d.pfm under `dir`.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// Deterministic train/test split (70/30 by default).
void split_dataset(Dataset& ds, uint64_t seed, double train_fraction = 0.7);

// Analytic scenes used for synthetic captures: geometry, materials, light.
struct SyntheticScene {
    std::shared_ptr<SdfField> field;
    std::shared_ptr<MaterialSource> materials;
    double light = 9.0;
};
SyntheticScene make_scene(const std::string& name);
bool is_known_scene(const std::string& name);

// Renders a photometric capture with the edge-aware renderer: cameras on a
// radius-3 sphere looking at the origin, the flash collocated with each
// camera. Also writes the ground-truth mesh and a scene description.
Dataset make_synthetic(const std::string& scene_name, int num_views, int resolution,
                       uint64_t seed, const std::string& out_dir);

}  // namespace invrend
