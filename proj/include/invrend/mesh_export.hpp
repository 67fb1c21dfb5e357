#pragma once

#include "invrend/shade.hpp"

namespace invrend {

struct MeshAsset {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec2> uv;        // per vertex, [0,1]^2 (after make_uv_atlas)
    Imaged diffuse_tex;          // 3 channels, linear
    Imaged specular_tex;         // 3 channels, linear
    Imaged roughness_tex;        // 1 channel

    size_t vertex_count() const { return vertices.size(); }
    size_t triangle_count() const { return triangles.size(); }
    bool empty() const { return triangles.empty(); }
};

struct GridBounds {
    Vec3 lo{-1.2, -1.2, -1.2};
    Vec3 hi{1.2, 1.2, 1.2};
};

// 256-case marching cubes with linear interpolation along cell edges. The
// case table is built once by contour-walking each sign configuration; the
// ambiguous-face rule is fixed (no asymptotic decider). Emits a warning to
// stderr and returns an empty mesh when the level set is empty.
MeshAsset marching_cubes(const SdfField& field, int grid_res, const GridBounds& bounds = {},
                         bool parallel = true);

// Topology helpers. Euler characteristic V - E + F over unique undirected
// edges; watertight means every edge borders exactly two triangles.
int euler_characteristic(const MeshAsset& mesh);
bool is_watertight(const MeshAsset& mesh);

// Box-projection UV atlas: triangles are grouped by dominant normal axis
// into six charts packed on a 3x2 grid. Vertices shared across charts are
// duplicated so uv is per-vertex.
void make_uv_atlas(MeshAsset& mesh);

// Fraction of covered texels claimed by more than one triangle at the given
// rasterization resolution (the chart-overlap check).
double uv_overlap_fraction(const MeshAsset& mesh, int resolution);

// Queries the material source at >= spp surface samples per covered texel
// and splats with a bilinear footprint; uncovered texels are filled by
// nearest-covered dilation.
void bake_textures(const SdfField& field, const MaterialSource& mats, MeshAsset& mesh,
                   int resolution, int spp = 4, bool parallel = true);

// ASCII OBJ with vt records plus an MTL referencing the baked textures
// (diffuse/specular as 16-bit PNG, roughness as PFM).
void save_mesh_asset(const std::string& dir, const std::string& name, const MeshAsset& mesh);
// Geometry-only OBJ loader (v/f records; used for ground-truth meshes).
MeshAsset load_obj(const std::string& path);
void save_obj_geometry(const std::string& path, const MeshAsset& mesh);

// ---------------------------------------------------------------------------
// Mesh re-rendering for the export round trip: ray-traced triangle mesh with
// interpolated vertex normals, bilinear texture lookups, and the same
// collocated shading as the field renderer.
struct MeshTracer {
    explicit MeshTracer(const MeshAsset& mesh);
    // Returns triangle index or -1; fills hit point, barycentrics, t.
    int intersect(const Ray& ray, Vec3* x, Vec3* bary, double* t) const;

    const MeshAsset& mesh;
    std::vector<Vec3> vertex_normals;
    // uniform-grid acceleration
    Vec3 lo, hi;
    int res = 32;
    std::vector<std::vector<int>> cells;
};

Imaged render_mesh(const MeshAsset& mesh, double light, const Camera& cam,
                   const ShadeConfig& cfg, int supersample = 2, bool parallel = true);

// Symmetric mean nearest-neighbor distance between surface samplings.
double chamfer_l1(const MeshAsset& a, const MeshAsset& b, int samples = 50000,
                  uint64_t seed = 1);

}  // namespace invrend
