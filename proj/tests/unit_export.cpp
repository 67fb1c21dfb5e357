#include <cstdio>
#include <set>

#include "doctest.h"
#include "invrend/losses.hpp"
#include "invrend/mesh_export.hpp"

using namespace invrend;

TEST_CASE("marching cubes on the unit sphere: topology, accuracy, orientation") {
    SphereSdf sphere({0, 0, 0}, 1.0);
    MeshAsset mesh = marching_cubes(sphere, 64);
    REQUIRE(!mesh.empty());
    CHECK(euler_characteristic(mesh) == 2);
    CHECK(is_watertight(mesh));

    const double cell = 2.4 / 64;
    double max_radial = 0, max_sdf = 0;
    for (const Vec3& v : mesh.vertices) {
        max_radial = std::max(max_radial, std::abs(v.norm() - 1.0));
        max_sdf = std::max(max_sdf, std::abs(sphere.sdf(v)));
    }
    CHECK(max_radial <= 2 * cell);
    CHECK(max_sdf <= cell);

    // Outward winding.
    int outward = 0;
    for (const auto& t : mesh.triangles) {
        Vec3 c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                     .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        if (n.dot(c) > 0) ++outward;
    }
    CHECK(outward == int(mesh.triangles.size()));
}

TEST_CASE("marching cubes on a torus has Euler characteristic 0") {
    TorusSdf torus(1.0, 0.3);
    GridBounds b;
    b.lo = {-1.5, -1.5, -1.5};
    b.hi = {1.5, 1.5, 1.5};
    MeshAsset mesh = marching_cubes(torus, 96, b);
    REQUIRE(!mesh.empty());
    CHECK(euler_characteristic(mesh) == 0);
    CHECK(is_watertight(mesh));
}

TEST_CASE("empty level set yields an empty mesh") {
    SphereSdf faraway({5, 5, 5}, 0.1);  // positive everywhere in the grid
    MeshAsset mesh = marching_cubes(faraway, 16);
    CHECK(mesh.empty());
    CHECK(euler_characteristic(mesh) == 0);
}

TEST_CASE("uv atlas: single triangle, sphere charts, overlap, empty mesh") {
    MeshAsset tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.triangles = {{0, 1, 2}};
    make_uv_atlas(tri);
    REQUIRE(tri.uv.size() == 3);
    for (const Vec2& uv : tri.uv) {
        CHECK(uv.x >= 0.0);
        CHECK(uv.x <= 1.0);
        CHECK(uv.y >= 0.0);
        CHECK(uv.y <= 1.0);
    }

    SphereSdf sphere({0, 0, 0}, 0.9);
    MeshAsset mesh = marching_cubes(sphere, 48);
    make_uv_atlas(mesh);
    REQUIRE(mesh.uv.size() == mesh.vertices.size());
    // Box projection occupies all six cells of the 3x2 chart grid.
    std::set<int> charts;
    for (const Vec2& uv : mesh.uv)
        charts.insert(int(uv.x * 3.0) + 3 * int(uv.y * 2.0));
    CHECK(charts.size() >= 6);
    CHECK(uv_overlap_fraction(mesh, 256) < 0.005);

    MeshAsset empty;
    make_uv_atlas(empty);
    CHECK(empty.uv.empty());
}

TEST_CASE("bake: constant materials give a constant texture") {
    SphereSdf sphere({0, 0, 0}, 0.8);
    MaterialSample mat{{0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}, 0.33};
    ConstantMaterial mats(mat);
    MeshAsset mesh = marching_cubes(sphere, 32);
    make_uv_atlas(mesh);
    bake_textures(sphere, mats, mesh, 128, 4);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(std::abs(mesh.diffuse_tex.at(x, y, c) - 0.5) <= 1e-6);
                CHECK(std::abs(mesh.specular_tex.at(x, y, c) - 0.25) <= 1e-6);
            }
            CHECK(std::abs(mesh.roughness_tex.at(x, y) - 0.33) <= 1e-6);
        }
}

TEST_CASE("bake: two-tone albedo boundary is confined to a 2-texel band") {
    SphereSdf sphere({0, 0, 0}, 0.8);
    TwoToneMaterial mats;
    mats.axis = {1, 0, 0};
    mats.pos = {{0.8, 0.2, 0.2}, {0.1, 0.1, 0.1}, 0.3};
    mats.neg = {{0.2, 0.2, 0.8}, {0.1, 0.1, 0.1}, 0.3};
    MeshAsset mesh = marching_cubes(sphere, 48);
    make_uv_atlas(mesh);
    const int R = 192;
    bake_textures(sphere, mats, mesh, R, 4);

    auto tone_of = [&](int x, int y) {
        double r = mesh.diffuse_tex.at(x, y, 0);
        if (std::abs(r - 0.8) < 0.02) return 1;
        if (std::abs(r - 0.2) < 0.02) return -1;
        return 0;  // mixed
    };
    int mixed = 0, total = 0;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            ++total;
            if (tone_of(x, y) != 0) continue;
            ++mixed;
            // A mixed texel must sit within 2 texels of both pure tones.
            bool near_pos = false, near_neg = false;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    int xx = std::clamp(x + dx, 0, R - 1), yy = std::clamp(y + dy, 0, R - 1);
                    if (tone_of(xx, yy) > 0) near_pos = true;
                    if (tone_of(xx, yy) < 0) near_neg = true;
                }
            CHECK((near_pos && near_neg));
        }
    CHECK(mixed < total / 12);  // boundary band only
}

TEST_CASE("bake: 1x1 texture averages the surface") {
    SphereSdf sphere({0, 0, 0}, 0.8);
    ConstantMaterial mats({{0.6, 0.6, 0.6}, {0.2, 0.2, 0.2}, 0.4});
    MeshAsset mesh = marching_cubes(sphere, 24);
    make_uv_atlas(mesh);
    bake_textures(sphere, mats, mesh, 1, 4);
    CHECK(mesh.diffuse_tex.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("export round trip re-renders within 30 dB of the field render") {
    SphereSdf sphere({0, 0, 0}, 0.8);
    ConstantMaterial mats({{0.6, 0.45, 0.3}, {0.3, 0.3, 0.3}, 0.25});
    const double L = 9.0;
    MeshAsset mesh = marching_cubes(sphere, 96);
    make_uv_atlas(mesh);
    bake_textures(sphere, mats, mesh, 256, 4);

    Camera cam = Camera::look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 96, 96, 96 * 1.2);
    RenderOptions opts;
    RenderResult field_render = render_image(sphere, mats, L, cam, opts);
    Imaged mesh_render = invrend::render_mesh(mesh, L, cam, opts.shade, 2);

    ToneConfig tone;
    Imaged a = tone_map_image(field_render.image, tone);
    Imaged b = tone_map_image(mesh_render, tone);
    const double peak = tone_map(tone.clamp_max, tone);
    CHECK(psnr(a, b, peak) >= 30.0);
}

TEST_CASE("chamfer distance: identity and a known shift") {
    SphereSdf sphere({0, 0, 0}, 0.7);
    MeshAsset a = marching_cubes(sphere, 32);
    CHECK(chamfer_l1(a, a, 8000) == doctest::Approx(0.0).epsilon(1e-12));

    MeshAsset b = a;
    for (Vec3& v : b.vertices) v.x += 0.1;
    const double d = chamfer_l1(a, b, 8000);
    CHECK(d > 0.02);
    CHECK(d < 0.1);
}

TEST_CASE("obj geometry save/load round trip") {
    SphereSdf sphere({0, 0, 0}, 0.6);
    MeshAsset mesh = marching_cubes(sphere, 16);
    const std::string path = "/tmp/invrend_test_mesh.obj";
    save_obj_geometry(path, mesh);
    MeshAsset loaded = load_obj(path);
    REQUIRE(loaded.vertices.size() == mesh.vertices.size());
    REQUIRE(loaded.triangles.size() == mesh.triangles.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i)
        CHECK((loaded.vertices[i] - mesh.vertices[i]).norm() < 1e-9);
    CHECK(euler_characteristic(loaded) == euler_characteristic(mesh));
    std::remove(path.c_str());
}
