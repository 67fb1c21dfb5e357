#include "invrend/mesh_export.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include "invrend/image_io.hpp"
#include "invrend/parallel.hpp"
#include "mc_tables.hpp"

namespace invrend {

MeshAsset marching_cubes(const SdfField& field, int grid_res, const GridBounds& bounds,
                         bool parallel) {
    if (grid_res < 8) throw std::invalid_argument("marching_cubes: grid_res must be >= 8");
    const int n = grid_res + 1;
    const Vec3 ext = bounds.hi - bounds.lo;
    const Vec3 cell{ext.x / grid_res, ext.y / grid_res, ext.z / grid_res};

    std::vector<double> grid(size_t(n) * n * n);
    auto gidx = [&](int x, int y, int z) { return (size_t(z) * n + y) * n + x; };
    auto gpos = [&](int x, int y, int z) {
        return Vec3{bounds.lo.x + x * cell.x, bounds.lo.y + y * cell.y, bounds.lo.z + z * cell.z};
    };
    auto fill = [&](int64_t z) {
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) grid[gidx(x, y, int(z))] = field.sdf(gpos(x, y, int(z)));
    };
    if (parallel)
        parallel_for(n, fill);
    else
        serial_for(n, fill);

    MeshAsset mesh;
    std::unordered_map<uint64_t, int> edge_vertex;  // canonical grid-edge -> vertex id
    auto vertex_on_edge = [&](int x, int y, int z, int axis) {
        const uint64_t key = ((uint64_t(gidx(x, y, z)) << 2) | uint64_t(axis));
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        int x2 = x + (axis == 0), y2 = y + (axis == 1), z2 = z + (axis == 2);
        const double s0 = grid[gidx(x, y, z)], s1 = grid[gidx(x2, y2, z2)];
        double tt = s0 / (s0 - s1);
        tt = clampd(tt, 0.0, 1.0);
        Vec3 p0 = gpos(x, y, z), p1 = gpos(x2, y2, z2);
        int id = int(mesh.vertices.size());
        mesh.vertices.push_back(p0 + tt * (p1 - p0));
        edge_vertex.emplace(key, id);
        return id;
    };

    // Map a cell-local edge to (grid point, axis).
    auto cell_edge_vertex = [&](int cx, int cy, int cz, int e) {
        const int a = mc::kEdge[e][0], b = mc::kEdge[e][1];
        int ax = mc::kCorner[a][0], ay = mc::kCorner[a][1], az = mc::kCorner[a][2];
        int bx = mc::kCorner[b][0], by = mc::kCorner[b][1], bz = mc::kCorner[b][2];
        int axis = (ax != bx) ? 0 : (ay != by ? 1 : 2);
        int ox = std::min(ax, bx), oy = std::min(ay, by), oz = std::min(az, bz);
        return vertex_on_edge(cx + ox, cy + oy, cz + oz, axis);
    };

    for (int z = 0; z < grid_res; ++z)
        for (int y = 0; y < grid_res; ++y)
            for (int x = 0; x < grid_res; ++x) {
                int config = 0;
                for (int c = 0; c < 8; ++c) {
                    const double s = grid[gidx(x + mc::kCorner[c][0], y + mc::kCorner[c][1],
                                               z + mc::kCorner[c][2])];
                    if (s < 0) config |= 1 << c;
                }
                if (config == 0 || config == 255) continue;
                for (const auto& tri : mc::case_triangles(config)) {
                    int v0 = cell_edge_vertex(x, y, z, tri[0]);
                    int v1 = cell_edge_vertex(x, y, z, tri[1]);
                    int v2 = cell_edge_vertex(x, y, z, tri[2]);
                    if (v0 == v1 || v1 == v2 || v0 == v2) continue;
                    Vec3 area = (mesh.vertices[v1] - mesh.vertices[v0])
                                    .cross(mesh.vertices[v2] - mesh.vertices[v0]);
                    if (area.norm() * 0.5 <= 1e-12) continue;  // degenerate
                    mesh.triangles.push_back({v0, v1, v2});
                }
            }

    if (mesh.triangles.empty())
        std::cerr << "marching_cubes: empty level set, returning empty mesh\n";
    return mesh;
}

int euler_characteristic(const MeshAsset& mesh) {
    std::set<std::pair<int, int>> edges;
    std::set<int> verts;
    for (const auto& t : mesh.triangles)
        for (int i = 0; i < 3; ++i) {
            int a = t[i], b = t[(i + 1) % 3];
            edges.emplace(std::min(a, b), std::max(a, b));
            verts.insert(a);
        }
    return int(verts.size()) - int(edges.size()) + int(mesh.triangles.size());
}

bool is_watertight(const MeshAsset& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& t : mesh.triangles)
        for (int i = 0; i < 3; ++i) {
            int a = t[i], b = t[(i + 1) % 3];
            count[{std::min(a, b), std::max(a, b)}]++;
        }
    for (const auto& [e, c] : count)
        if (c != 2) return false;
    return !mesh.triangles.empty();
}

// ---------------------------------------------------------------------------

namespace {
Vec3 tri_normal(const MeshAsset& m, const std::array<int, 3>& t) {
    return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
}
}  // namespace

void make_uv_atlas(MeshAsset& mesh) {
    mesh.uv.assign(mesh.vertices.size(), Vec2{0, 0});
    if (mesh.empty()) return;

    // Chart per dominant axis direction (+x,-x,+y,-y,+z,-z).
    auto chart_of = [&](const std::array<int, 3>& t) {
        Vec3 n = tri_normal(mesh, t);
        double ax = std::abs(n.x), ay = std::abs(n.y), az = std::abs(n.z);
        if (ax >= ay && ax >= az) return n.x >= 0 ? 0 : 1;
        if (ay >= az) return n.y >= 0 ? 2 : 3;
        return n.z >= 0 ? 4 : 5;
    };
    // Project onto the two other axes.
    auto project = [&](int chart, const Vec3& p) {
        switch (chart / 2) {
            case 0: return Vec2{p.y, p.z};
            case 1: return Vec2{p.x, p.z};
            default: return Vec2{p.x, p.y};
        }
    };

    // Split vertices per (vertex, chart).
    std::vector<std::array<int, 6>> remap(mesh.vertices.size(), {-1, -1, -1, -1, -1, -1});
    std::vector<Vec3> new_verts;
    std::vector<int> vert_chart;
    for (auto& t : mesh.triangles) {
        int chart = chart_of(t);
        for (int i = 0; i < 3; ++i) {
            int v = t[i];
            if (remap[v][chart] < 0) {
                remap[v][chart] = int(new_verts.size());
                new_verts.push_back(mesh.vertices[v]);
                vert_chart.push_back(chart);
            }
            t[i] = remap[v][chart];
        }
    }
    mesh.vertices = std::move(new_verts);
    mesh.uv.assign(mesh.vertices.size(), Vec2{0, 0});

    // Per-chart bounds, then pack into a 3x2 grid with margins.
    Vec2 lo[6], hi[6];
    bool used[6] = {};
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        int c = vert_chart[v];
        Vec2 p = project(c, mesh.vertices[v]);
        if (!used[c]) {
            lo[c] = hi[c] = p;
            used[c] = true;
        } else {
            lo[c] = {std::min(lo[c].x, p.x), std::min(lo[c].y, p.y)};
            hi[c] = {std::max(hi[c].x, p.x), std::max(hi[c].y, p.y)};
        }
    }
    const double margin = 0.012;
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        int c = vert_chart[v];
        Vec2 p = project(c, mesh.vertices[v]);
        double sx = std::max(hi[c].x - lo[c].x, 1e-12);
        double sy = std::max(hi[c].y - lo[c].y, 1e-12);
        double s = std::max(sx, sy);  // uniform scale keeps texel density even
        Vec2 unit{(p.x - lo[c].x) / s, (p.y - lo[c].y) / s};
        const double cw = 1.0 / 3.0, ch = 0.5;
        const double ox = (c % 3) * cw, oy = (c / 3) * ch;
        mesh.uv[v] = {ox + margin + unit.x * (cw - 2 * margin),
                      oy + margin + unit.y * (ch - 2 * margin)};
    }
}

namespace {

struct TexelAccum {
    double value[7] = {};  // beta rgb, kappa rgb, alpha
    double weight = 0;
};

// Rasterization helper: visits >= spp sample points per covered texel.
template <typename F>
void rasterize_uv(const MeshAsset& mesh, int res, int spp, bool parallel, F&& per_sample) {
    const int sub = std::max(2, int(std::ceil(std::sqrt(double(spp)))));
    auto body = [&](int64_t ti) {
        const auto& t = mesh.triangles[ti];
        Vec2 a = mesh.uv[t[0]] * double(res);
        Vec2 b = mesh.uv[t[1]] * double(res);
        Vec2 c = mesh.uv[t[2]] * double(res);
        int x0 = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}))));
        int x1 = std::min(res - 1, int(std::ceil(std::max({a.x, b.x, c.x}))));
        int y0 = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}))));
        int y1 = std::min(res - 1, int(std::ceil(std::max({a.y, b.y, c.y}))));
        const double den = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if (std::abs(den) < 1e-18) return;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                for (int sy = 0; sy < sub; ++sy)
                    for (int sx = 0; sx < sub; ++sx) {
                        Vec2 p{x + (sx + 0.5) / sub, y + (sy + 0.5) / sub};
                        double w1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / den;
                        double w2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / den;
                        double w0 = 1.0 - w1 - w2;
                        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                        per_sample(int(ti), p, w0, w1, w2);
                    }
    };
    if (parallel)
        parallel_for(int64_t(mesh.triangles.size()), body);
    else
        serial_for(int64_t(mesh.triangles.size()), body);
}

}  // namespace

double uv_overlap_fraction(const MeshAsset& mesh, int resolution) {
    // Folded charts double-claim exact sample positions. Border texels
    // merely touched by two non-overlapping triangles do not count, and
    // triangles sharing a vertex are adjacency, not overlap.
    const int sub = 2;
    const int R = resolution * sub;
    std::vector<int> owner(size_t(R) * R, -1);
    std::vector<uint8_t> overlap(size_t(R) * R, 0);
    auto disjoint = [&](int ta, int tb) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (mesh.triangles[ta][i] == mesh.triangles[tb][j]) return false;
        return true;
    };
    rasterize_uv(mesh, resolution, sub * sub, false,
                 [&](int ti, Vec2 p, double, double, double) {
                     int x = std::min(R - 1, int(p.x * sub)), y = std::min(R - 1, int(p.y * sub));
                     size_t i = size_t(y) * R + x;
                     if (owner[i] < 0)
                         owner[i] = ti;
                     else if (owner[i] != ti && !overlap[i] && disjoint(owner[i], ti))
                         overlap[i] = 1;
                 });
    size_t covered = 0, bad = 0;
    for (size_t i = 0; i < owner.size(); ++i) {
        if (owner[i] >= 0) ++covered;
        if (overlap[i]) ++bad;
    }
    return covered == 0 ? 0.0 : double(bad) / double(covered);
}

void bake_textures(const SdfField& field, const MaterialSource& mats, MeshAsset& mesh,
                   int resolution, int spp, bool parallel) {
    if (mesh.uv.size() != mesh.vertices.size())
        throw std::invalid_argument("bake_textures: run make_uv_atlas first");
    const int R = resolution;
    std::vector<TexelAccum> accum(size_t(R) * R);

    // Sample pass (serial accumulation into texels; the field queries are the
    // expensive part and run per-triangle in parallel via a local buffer).
    std::vector<std::vector<std::pair<int, TexelAccum>>> local(
        std::max<size_t>(1, mesh.triangles.size()));
    rasterize_uv(mesh, R, spp, parallel, [&](int ti, Vec2 p, double w0, double w1, double w2) {
        const auto& t = mesh.triangles[ti];
        Vec3 x = w0 * mesh.vertices[t[0]] + w1 * mesh.vertices[t[1]] + w2 * mesh.vertices[t[2]];
        double s;
        Vec3 g;
        std::vector<double> feat;
        field.sdf_full(x, &s, &g, &feat);
        Vec3 n = g.normalized();
        MaterialSample m = mats.eval(x, n.norm() > 0.5 ? n : Vec3{0, 0, 1}, feat);
        // Bilinear splat into the four nearest texels.
        double fx = p.x - 0.5, fy = p.y - 0.5;
        int bx = int(std::floor(fx)), by = int(std::floor(fy));
        double ax = fx - bx, ay = fy - by;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                int tx = bx + dx, ty = by + dy;
                if (tx < 0 || ty < 0 || tx >= R || ty >= R) continue;
                double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
                if (w <= 0) continue;
                TexelAccum ta;
                ta.weight = w;
                ta.value[0] = w * m.beta.x;
                ta.value[1] = w * m.beta.y;
                ta.value[2] = w * m.beta.z;
                ta.value[3] = w * m.kappa.x;
                ta.value[4] = w * m.kappa.y;
                ta.value[5] = w * m.kappa.z;
                ta.value[6] = w * m.alpha_r;
                local[ti].push_back({ty * R + tx, ta});
            }
    });
    for (auto& chunk : local)
        for (auto& [idx, ta] : chunk) {
            for (int k = 0; k < 7; ++k) accum[idx].value[k] += ta.value[k];
            accum[idx].weight += ta.weight;
        }

    mesh.diffuse_tex = Imaged(R, R, 3, 0.0);
    mesh.specular_tex = Imaged(R, R, 3, 0.0);
    mesh.roughness_tex = Imaged(R, R, 1, 0.0);
    std::vector<uint8_t> covered(size_t(R) * R, 0);
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            TexelAccum& ta = accum[size_t(y) * R + x];
            if (ta.weight <= 1e-12) continue;
            covered[size_t(y) * R + x] = 1;
            for (int c = 0; c < 3; ++c) {
                mesh.diffuse_tex.at(x, y, c) = ta.value[c] / ta.weight;
                mesh.specular_tex.at(x, y, c) = ta.value[3 + c] / ta.weight;
            }
            mesh.roughness_tex.at(x, y) = ta.value[6] / ta.weight;
        }

    // Nearest-covered dilation (BFS) for uncovered texels.
    std::queue<std::pair<int, int>> frontier;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x)
            if (covered[size_t(y) * R + x]) frontier.push({x, y});
    while (!frontier.empty()) {
        auto [x, y] = frontier.front();
        frontier.pop();
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= R || ny >= R) continue;
            if (covered[size_t(ny) * R + nx]) continue;
            covered[size_t(ny) * R + nx] = 1;
            for (int c = 0; c < 3; ++c) {
                mesh.diffuse_tex.at(nx, ny, c) = mesh.diffuse_tex.at(x, y, c);
                mesh.specular_tex.at(nx, ny, c) = mesh.specular_tex.at(x, y, c);
            }
            mesh.roughness_tex.at(nx, ny) = mesh.roughness_tex.at(x, y);
            frontier.push({nx, ny});
        }
    }
}

// ---------------------------------------------------------------------------

void save_mesh_asset(const std::string& dir, const std::string& name, const MeshAsset& mesh) {
    save_png16(dir + "/" + name + "_diffuse.png", mesh.diffuse_tex);
    save_png16(dir + "/" + name + "_specular.png", mesh.specular_tex);
    save_pfm(dir + "/" + name + "_roughness.pfm", to_float(mesh.roughness_tex));

    std::ofstream mtl(dir + "/" + name + ".mtl");
    mtl << "newmtl " << name << "\n"
        << "map_Kd " << name << "_diffuse.png\n"
        << "map_Ks " << name << "_specular.png\n"
        << "# roughness stored in " << name << "_roughness.pfm\n";

    std::ofstream obj(dir + "/" + name + ".obj");
    obj << "mtllib " << name << ".mtl\nusemtl " << name << "\n";
    obj.precision(12);
    for (const Vec3& v : mesh.vertices) obj << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const Vec2& t : mesh.uv) obj << "vt " << t.x << " " << t.y << "\n";
    for (const auto& t : mesh.triangles)
        obj << "f " << t[0] + 1 << "/" << t[0] + 1 << " " << t[1] + 1 << "/" << t[1] + 1 << " "
            << t[2] + 1 << "/" << t[2] + 1 << "\n";
    if (!obj) throw std::runtime_error("failed writing " + dir + "/" + name + ".obj");
}

void save_obj_geometry(const std::string& path, const MeshAsset& mesh) {
    std::ofstream obj(path);
    obj.precision(12);
    for (const Vec3& v : mesh.vertices) obj << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& t : mesh.triangles)
        obj << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    if (!obj) throw std::runtime_error("failed writing " + path);
}

MeshAsset load_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    MeshAsset mesh;
    std::string tok;
    while (f >> tok) {
        if (tok == "v") {
            Vec3 v;
            f >> v.x >> v.y >> v.z;
            mesh.vertices.push_back(v);
        } else if (tok == "f") {
            std::array<int, 3> t;
            for (int i = 0; i < 3; ++i) {
                std::string s;
                f >> s;
                t[i] = std::atoi(s.c_str()) - 1;
            }
            mesh.triangles.push_back(t);
        } else {
            std::string rest;
            std::getline(f, rest);
        }
    }
    return mesh;
}

// ---------------------------------------------------------------------------

MeshTracer::MeshTracer(const MeshAsset& m) : mesh(m) {
    vertex_normals.assign(mesh.vertices.size(), Vec3{0, 0, 0});
    for (const auto& t : mesh.triangles) {
        Vec3 n = tri_normal(mesh, t);  // area-weighted
        for (int i = 0; i < 3; ++i) vertex_normals[t[i]] += n;
    }
    for (Vec3& n : vertex_normals) n = n.normalized();

    lo = hi = mesh.vertices.empty() ? Vec3{0, 0, 0} : mesh.vertices[0];
    for (const Vec3& v : mesh.vertices) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    Vec3 pad = 1e-4 * (hi - lo) + Vec3{1e-6, 1e-6, 1e-6};
    lo = lo - pad;
    hi = hi + pad;
    cells.assign(size_t(res) * res * res, {});
    auto cell_range = [&](double a, double b, int axis) {
        double w = (&hi.x)[axis] - (&lo.x)[axis];
        int c0 = clampd(std::floor((a - (&lo.x)[axis]) / w * res), 0, res - 1);
        int c1 = clampd(std::floor((b - (&lo.x)[axis]) / w * res), 0, res - 1);
        return std::make_pair(c0, c1);
    };
    for (size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        const auto& t = mesh.triangles[ti];
        Vec3 tlo = mesh.vertices[t[0]], thi = tlo;
        for (int i = 1; i < 3; ++i) {
            const Vec3& v = mesh.vertices[t[i]];
            tlo = {std::min(tlo.x, v.x), std::min(tlo.y, v.y), std::min(tlo.z, v.z)};
            thi = {std::max(thi.x, v.x), std::max(thi.y, v.y), std::max(thi.z, v.z)};
        }
        auto [x0, x1] = cell_range(tlo.x, thi.x, 0);
        auto [y0, y1] = cell_range(tlo.y, thi.y, 1);
        auto [z0, z1] = cell_range(tlo.z, thi.z, 2);
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    cells[(size_t(z) * res + y) * res + x].push_back(int(ti));
    }
}

namespace {
bool ray_tri(const Ray& r, const Vec3& a, const Vec3& b, const Vec3& c, double* t, double* u,
             double* v) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 p = r.d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) return false;
    const double inv = 1.0 / det;
    const Vec3 s = r.o - a;
    const double uu = s.dot(p) * inv;
    if (uu < -1e-9 || uu > 1 + 1e-9) return false;
    const Vec3 q = s.cross(e1);
    const double vv = r.d.dot(q) * inv;
    if (vv < -1e-9 || uu + vv > 1 + 1e-9) return false;
    const double tt = e2.dot(q) * inv;
    if (tt <= 1e-9) return false;
    *t = tt;
    *u = uu;
    *v = vv;
    return true;
}
}  // namespace

int MeshTracer::intersect(const Ray& ray, Vec3* x, Vec3* bary, double* t_out) const {
    // Slab test against the grid bounds, then 3D-DDA through the cells.
    double t0 = 0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = (&ray.o.x)[a], d = (&ray.d.x)[a];
        const double L = (&lo.x)[a], H = (&hi.x)[a];
        if (std::abs(d) < 1e-15) {
            if (o < L || o > H) return -1;
        } else {
            double ta = (L - o) / d, tb = (H - o) / d;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
    }
    if (t0 > t1) return -1;

    Vec3 entry = ray.at(t0 + 1e-12);
    const Vec3 ext = hi - lo;
    int cx = int(clampd((entry.x - lo.x) / ext.x * res, 0, res - 1));
    int cy = int(clampd((entry.y - lo.y) / ext.y * res, 0, res - 1));
    int cz = int(clampd((entry.z - lo.z) / ext.z * res, 0, res - 1));
    const int step[3] = {ray.d.x > 0 ? 1 : -1, ray.d.y > 0 ? 1 : -1, ray.d.z > 0 ? 1 : -1};
    double t_max[3], t_delta[3];
    int cc[3] = {cx, cy, cz};
    for (int a = 0; a < 3; ++a) {
        const double d = (&ray.d.x)[a];
        const double cw = (&ext.x)[a] / res;
        if (std::abs(d) < 1e-15) {
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        } else {
            const double cell_lo = (&lo.x)[a] + cc[a] * cw;
            const double next = d > 0 ? cell_lo + cw : cell_lo;
            t_max[a] = (next - (&ray.o.x)[a]) / d;
            t_delta[a] = cw / std::abs(d);
        }
    }

    int best = -1;
    double best_t = std::numeric_limits<double>::infinity(), best_u = 0, best_v = 0;
    while (true) {
        for (int ti : cells[(size_t(cc[2]) * res + cc[1]) * res + cc[0]]) {
            const auto& tr = mesh.triangles[ti];
            double tt, uu, vv;
            if (ray_tri(ray, mesh.vertices[tr[0]], mesh.vertices[tr[1]], mesh.vertices[tr[2]],
                        &tt, &uu, &vv) &&
                tt < best_t) {
                best_t = tt;
                best_u = uu;
                best_v = vv;
                best = ti;
            }
        }
        const int axis = t_max[0] <= t_max[1] ? (t_max[0] <= t_max[2] ? 0 : 2)
                                              : (t_max[1] <= t_max[2] ? 1 : 2);
        if (best >= 0 && best_t < t_max[axis]) break;  // hit inside visited cells
        cc[axis] += step[axis];
        if (cc[axis] < 0 || cc[axis] >= res) break;
        t_max[axis] += t_delta[axis];
    }
    if (best < 0) return -1;
    if (x) *x = ray.at(best_t);
    if (bary) *bary = {1.0 - best_u - best_v, best_u, best_v};
    if (t_out) *t_out = best_t;
    return best;
}

namespace {
Vec3 tex_bilinear3(const Imaged& tex, const Vec2& uv) {
    const double fx = clampd(uv.x * tex.width - 0.5, 0.0, tex.width - 1.0);
    const double fy = clampd(uv.y * tex.height - 0.5, 0.0, tex.height - 1.0);
    const int x0 = int(fx), y0 = int(fy);
    const int x1 = std::min(x0 + 1, tex.width - 1), y1 = std::min(y0 + 1, tex.height - 1);
    const double ax = fx - x0, ay = fy - y0;
    Vec3 out;
    for (int c = 0; c < std::min(3, tex.channels); ++c) {
        double v = (1 - ax) * (1 - ay) * tex.at(x0, y0, c) + ax * (1 - ay) * tex.at(x1, y0, c) +
                   (1 - ax) * ay * tex.at(x0, y1, c) + ax * ay * tex.at(x1, y1, c);
        out[c] = v;
    }
    return out;
}
}  // namespace

Imaged render_mesh(const MeshAsset& mesh, double light, const Camera& cam,
                   const ShadeConfig& cfg, int supersample, bool parallel) {
    MeshTracer tracer(mesh);
    Imaged img(cam.width, cam.height, 3, cfg.background.x);
    PrimalCtx ctx;
    auto body = [&](int64_t idx) {
        const int px = int(idx % cam.width), py = int(idx / cam.width);
        Vec3 acc{0, 0, 0};
        for (int sy = 0; sy < supersample; ++sy)
            for (int sx = 0; sx < supersample; ++sx) {
                Vec2 pix{px + (sx + 0.5) / supersample, py + (sy + 0.5) / supersample};
                Ray ray = cam.ray_through(pix);
                Vec3 x, bary;
                double t;
                int ti = tracer.intersect(ray, &x, &bary, &t);
                if (ti < 0) {
                    acc += cfg.background;
                    continue;
                }
                const auto& tr = mesh.triangles[ti];
                Vec3 n = (bary.x * tracer.vertex_normals[tr[0]] +
                          bary.y * tracer.vertex_normals[tr[1]] +
                          bary.z * tracer.vertex_normals[tr[2]])
                             .normalized();
                if (cfg.flip_backfacing && n.dot(ray.d) > 0) n = -n;
                if (cfg.known_color) {
                    acc += cfg.known_color_rgb;
                    continue;
                }
                Vec2 uv = bary.x * mesh.uv[tr[0]] + bary.y * mesh.uv[tr[1]] +
                          bary.z * mesh.uv[tr[2]];
                Vec3 beta = tex_bilinear3(mesh.diffuse_tex, uv);
                Vec3 kappa = tex_bilinear3(mesh.specular_tex, uv);
                double alpha = tex_bilinear3(mesh.roughness_tex, uv).x;
                acc += shade_collocated_t(ctx, cfg, light, x, n, cam.origin(), beta, kappa,
                                          clampd(alpha, 1e-4, 1.0 - 1e-4));
            }
        const double inv = 1.0 / (supersample * supersample);
        for (int c = 0; c < 3; ++c) img.at(px, py, c) = acc[c] * inv;
    };
    if (parallel)
        parallel_for(int64_t(cam.width) * cam.height, body);
    else
        serial_for(int64_t(cam.width) * cam.height, body);
    return img;
}

double chamfer_l1(const MeshAsset& a, const MeshAsset& b, int samples, uint64_t seed) {
    auto sample_surface = [&](const MeshAsset& m, Rng rng) {
        std::vector<double> cum;
        cum.reserve(m.triangles.size());
        double total = 0;
        for (const auto& t : m.triangles) {
            total += 0.5 * tri_normal(m, t).norm();
            cum.push_back(total);
        }
        std::vector<Vec3> pts(samples);
        for (int i = 0; i < samples; ++i) {
            double r = rng.uniform() * total;
            size_t ti = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
            ti = std::min(ti, m.triangles.size() - 1);
            const auto& t = m.triangles[ti];
            double u = rng.uniform(), v = rng.uniform();
            if (u + v > 1) {
                u = 1 - u;
                v = 1 - v;
            }
            pts[i] = (1 - u - v) * m.vertices[t[0]] + u * m.vertices[t[1]] + v * m.vertices[t[2]];
        }
        return pts;
    };
    std::vector<Vec3> pa = sample_surface(a, Rng(seed));
    std::vector<Vec3> pb = sample_surface(b, Rng(seed + 1));

    // Point-to-surface distances through the triangle grid of the other
    // mesh; samples on a mesh have exactly zero distance to itself.
    MeshTracer ta(a), tb(b);
    auto point_tri = [](const Vec3& p, const Vec3& v0, const Vec3& v1, const Vec3& v2) {
        const Vec3 e0 = v1 - v0, e1 = v2 - v0, d = p - v0;
        const double a00 = e0.squaredNorm(), a01 = e0.dot(e1), a11 = e1.squaredNorm();
        const double b0 = e0.dot(d), b1 = e1.dot(d);
        double det = a00 * a11 - a01 * a01;
        double u = clampd(det > 1e-30 ? (a11 * b0 - a01 * b1) / det : 0.0, 0.0, 1.0);
        double v = clampd(det > 1e-30 ? (a00 * b1 - a01 * b0) / det : 0.0, 0.0, 1.0);
        if (u + v > 1.0) {
            // clamp onto the diagonal edge
            const Vec3 e2 = v2 - v1;
            double tt = clampd((p - v1).dot(e2) / e2.squaredNorm(), 0.0, 1.0);
            Vec3 q = v1 + tt * e2;
            double dd = (p - q).norm();
            // also consider the two outer edges
            double t0 = clampd(b0 / a00, 0.0, 1.0);
            dd = std::min(dd, (p - (v0 + t0 * e0)).norm());
            double t1 = clampd(b1 / a11, 0.0, 1.0);
            dd = std::min(dd, (p - (v0 + t1 * e1)).norm());
            return dd;
        }
        return (p - (v0 + u * e0 + v * e1)).norm();
    };
    auto nearest_surface = [&](const MeshTracer& tr, const Vec3& q) {
        // expanding ring search over the triangle grid
        const Vec3 ext = tr.hi - tr.lo;
        const double cw = std::max({ext.x, ext.y, ext.z}) / tr.res;
        int qx = int(clampd((q.x - tr.lo.x) / ext.x * tr.res, 0.0, tr.res - 1.0));
        int qy = int(clampd((q.y - tr.lo.y) / ext.y * tr.res, 0.0, tr.res - 1.0));
        int qz = int(clampd((q.z - tr.lo.z) / ext.z * tr.res, 0.0, tr.res - 1.0));
        double best = std::numeric_limits<double>::infinity();
        for (int ring = 0; ring < 2 * tr.res; ++ring) {
            for (int z = std::max(0, qz - ring); z <= std::min(tr.res - 1, qz + ring); ++z)
                for (int y = std::max(0, qy - ring); y <= std::min(tr.res - 1, qy + ring); ++y)
                    for (int x = std::max(0, qx - ring); x <= std::min(tr.res - 1, qx + ring);
                         ++x) {
                        if (std::max({std::abs(x - qx), std::abs(y - qy), std::abs(z - qz)}) !=
                            ring)
                            continue;
                        for (int ti : tr.cells[(size_t(z) * tr.res + y) * tr.res + x]) {
                            const auto& tri = tr.mesh.triangles[ti];
                            best = std::min(best, point_tri(q, tr.mesh.vertices[tri[0]],
                                                            tr.mesh.vertices[tri[1]],
                                                            tr.mesh.vertices[tri[2]]));
                        }
                    }
            if (best <= ring * cw) break;  // nothing outside can be closer
        }
        return best;
    };
    double d_ab = 0, d_ba = 0;
    for (const Vec3& p : pa) d_ab += nearest_surface(tb, p);
    for (const Vec3& p : pb) d_ba += nearest_surface(ta, p);
    return 0.5 * (d_ab / pa.size() + d_ba / pb.size());
}

}  // namespace invrend
