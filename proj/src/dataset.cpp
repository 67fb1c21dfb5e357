#include "invrend/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "invrend/image_io.hpp"
#include "invrend/mesh_export.hpp"
#include "json.hpp"

namespace invrend {

namespace fs = std::filesystem;

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    nlohmann::json cams = nlohmann::json::array();
    for (size_t i = 0; i < ds.views.size(); ++i) {
        const Camera& c = ds.views[i].camera;
        nlohmann::json jc;
        jc["width"] = c.width;
        jc["height"] = c.height;
        jc["fx"] = c.fx;
        jc["fy"] = c.fy;
        jc["cx"] = c.cx;
        jc["cy"] = c.cy;
        std::vector<double> m(12);
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) m[r * 4 + col] = c.rot(r, col);
            m[r * 4 + 3] = c.pos[r];
        }
        jc["cam_to_world"] = m;
        cams.push_back(jc);

        char name[64];
        std::snprintf(name, sizeof(name), "images/view_%04zu.pfm", i);
        save_pfm((fs::path(dir) / name).string(), ds.views[i].image);
    }
    nlohmann::json root;
    root["cameras"] = cams;
    root["scene_scale"] = ds.scene_scale;
    std::ofstream f(fs::path(dir) / "cameras.json");
    f << root.dump(2) << "\n";
    if (!f) throw std::runtime_error("failed writing cameras.json");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "cameras.json");
    if (!f) throw std::runtime_error("cannot open " + dir + "/cameras.json");
    nlohmann::json root = nlohmann::json::parse(f);
    Dataset ds;
    ds.scene_scale = root.value("scene_scale", 1.0);
    size_t i = 0;
    for (const auto& jc : root.at("cameras")) {
        CaptureView v;
        Camera& c = v.camera;
        c.width = jc.at("width");
        c.height = jc.at("height");
        c.fx = jc.at("fx");
        c.fy = jc.at("fy");
        c.cx = jc.at("cx");
        c.cy = jc.at("cy");
        std::vector<double> m = jc.at("cam_to_world");
        if (m.size() != 12) throw std::runtime_error("cam_to_world must have 12 numbers");
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) c.rot(r, col) = m[r * 4 + col];
            c.pos[r] = m[r * 4 + 3];
        }
        c.validate();
        char name[64];
        std::snprintf(name, sizeof(name), "images/view_%04zu.pfm", i++);
        v.image_path = (fs::path(dir) / name).string();
        v.image = load_pfm(v.image_path);
        if (v.image.width != c.width || v.image.height != c.height)
            throw std::runtime_error("image dimensions disagree with the camera");
        ds.views.push_back(std::move(v));
    }
    for (size_t k = 1; k < ds.views.size(); ++k)
        if (ds.views[k].image.width != ds.views[0].image.width ||
            ds.views[k].image.height != ds.views[0].image.height)
            throw std::runtime_error("dataset images must share dimensions");
    return ds;
}

void split_dataset(Dataset& ds, uint64_t seed, double train_fraction) {
    const int n = int(ds.views.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed ^ 0x51u);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(uint64_t(i + 1))]);
    const int ntrain = std::max(1, int(std::floor(train_fraction * n)));
    ds.train_indices.assign(order.begin(), order.begin() + ntrain);
    ds.test_indices.assign(order.begin() + ntrain, order.end());
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.test_indices.begin(), ds.test_indices.end());
}

SyntheticScene make_scene(const std::string& name) {
    SyntheticScene s;
    if (name == "sphere") {
        s.field = std::make_shared<SphereSdf>(Vec3{0, 0, 0}, 0.8);
        s.materials = std::make_shared<ConstantMaterial>(
            MaterialSample{{0.62, 0.48, 0.31}, {0.3, 0.3, 0.3}, 0.22});
    } else if (name == "two_tone_sphere") {
        s.field = std::make_shared<SphereSdf>(Vec3{0, 0, 0}, 0.8);
        auto mats = std::make_shared<TwoToneMaterial>();
        mats->axis = {1, 0, 0};
        mats->pos = {{0.70, 0.25, 0.20}, {0.25, 0.25, 0.25}, 0.25};
        mats->neg = {{0.20, 0.35, 0.70}, {0.25, 0.25, 0.25}, 0.25};
        s.materials = mats;
    } else if (name == "torus") {
        s.field = std::make_shared<TorusSdf>(0.55, 0.25);
        s.materials = std::make_shared<ConstantMaterial>(
            MaterialSample{{0.55, 0.5, 0.35}, {0.25, 0.25, 0.25}, 0.3});
    } else if (name == "blobby_union") {
        auto u = std::make_shared<SmoothUnionSdf>();
        u->k = 0.15;
        u->children.push_back(std::make_shared<SphereSdf>(Vec3{-0.25, 0, -0.1}, 0.42));
        u->children.push_back(std::make_shared<SphereSdf>(Vec3{0.3, 0.05, 0.12}, 0.35));
        u->children.push_back(std::make_shared<SphereSdf>(Vec3{0.0, -0.3, 0.28}, 0.3));
        s.field = u;
        s.materials = std::make_shared<ConstantMaterial>(
            MaterialSample{{0.5, 0.55, 0.6}, {0.3, 0.3, 0.3}, 0.28});
    } else {
        throw std::invalid_argument("unknown scene '" + name +
                                    "' (sphere, two_tone_sphere, torus, blobby_union)");
    }
    return s;
}

bool is_known_scene(const std::string& name) {
    return name == "sphere" || name == "two_tone_sphere" || name == "torus" ||
           name == "blobby_union";
}

Dataset make_synthetic(const std::string& scene_name, int num_views, int resolution,
                       uint64_t seed, const std::string& out_dir) {
    if (num_views <= 0) throw std::invalid_argument("make_synthetic: num_views must be > 0");
    if (resolution < 8) throw std::invalid_argument("make_synthetic: resolution too small");
    SyntheticScene scene = make_scene(scene_name);

    Dataset ds;
    Rng rng(seed);
    RenderOptions opts;
    for (int i = 0; i < num_views; ++i) {
        // Cameras on a radius-3 sphere, mildly stratified in elevation so
        // views cover the object all around.
        const double z = rng.uniform(-0.85, 0.85);
        const double phi = rng.uniform(0.0, 2 * kPi);
        const double r = std::sqrt(1.0 - z * z);
        Vec3 eye = Vec3{r * std::cos(phi), r * std::sin(phi), z} * 3.0;
        CaptureView v;
        v.camera = Camera::look_at(eye, {0, 0, 0}, {0, 0, 1}, resolution, resolution,
                                   resolution * 1.2);
        RenderResult res =
            render_image(*scene.field, *scene.materials, scene.light, v.camera, opts);
        v.image = to_float(res.image);
        ds.views.push_back(std::move(v));
    }
    split_dataset(ds, seed);

    if (!out_dir.empty()) {
        save_dataset(out_dir, ds);
        // Ground truth for evaluation: mesh plus the scene description.
        GridBounds b;
        MeshAsset gt = marching_cubes(*scene.field, 128, b);
        save_obj_geometry((fs::path(out_dir) / "gt_mesh.obj").string(), gt);
        nlohmann::json j;
        j["scene"] = scene_name;
        j["light"] = scene.light;
        j["seed"] = seed;
        j["train_indices"] = nlohmann::json(ds.train_indices);
        j["test_indices"] = nlohmann::json(ds.test_indices);
        std::ofstream f(fs::path(out_dir) / "scene.json");
        f << j.dump(2) << "\n";
    }
    return ds;
}

}  // namespace invrend
