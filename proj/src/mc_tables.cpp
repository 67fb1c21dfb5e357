// Marching-cubes case table, generated once at startup by walking the
// isocontour over each cube configuration's surface. Negative corners count
// as inside. Each face pairs its sign crossings so that negative corners are
// separated (the fixed choice on ambiguous faces), which keeps neighboring
// cells crack-free.

#include "mc_tables.hpp"

#include "invrend/core.hpp"

namespace invrend {

namespace mc {

// corner positions (unit cube), classic ordering
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// edge -> corner pair
const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                          {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// faces as corner quads (cyclic); orientation fixed numerically below
const int kFace[6][4] = {{0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4},
                         {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};

namespace {

Vec3 corner_pos(int c) {
    return {double(kCorner[c][0]), double(kCorner[c][1]), double(kCorner[c][2])};
}

int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e)
        if ((kEdge[e][0] == a && kEdge[e][1] == b) || (kEdge[e][0] == b && kEdge[e][1] == a))
            return e;
    return -1;
}

struct Segment {
    int face;
    int from_edge, to_edge;
};

std::array<std::vector<std::array<int, 3>>, 256> build_table() {
    std::array<std::vector<std::array<int, 3>>, 256> table;

    // Face cycles oriented counter-clockwise seen from outside the cube.
    int face_cycle[6][4];
    for (int f = 0; f < 6; ++f) {
        for (int i = 0; i < 4; ++i) face_cycle[f][i] = kFace[f][i];
        Vec3 p0 = corner_pos(face_cycle[f][0]), p1 = corner_pos(face_cycle[f][1]),
             p2 = corner_pos(face_cycle[f][2]);
        Vec3 n = (p1 - p0).cross(p2 - p0);
        Vec3 center = (p0 + p1 + p2 + corner_pos(face_cycle[f][3])) * 0.25;
        Vec3 outward = center - Vec3{0.5, 0.5, 0.5};
        if (n.dot(outward) < 0) std::swap(face_cycle[f][1], face_cycle[f][3]);
    }

    for (int config = 0; config < 256; ++config) {
        auto inside = [&](int c) { return (config >> c) & 1; };  // bit set: negative corner

        // Collect directed contour segments face by face.
        std::vector<Segment> segs;
        for (int f = 0; f < 6; ++f) {
            const int* cyc = face_cycle[f];
            std::vector<int> cross_edges;   // in cycle order
            std::vector<int> arc_corner;    // corner following each crossing
            for (int i = 0; i < 4; ++i) {
                int a = cyc[i], b = cyc[(i + 1) % 4];
                if (inside(a) != inside(b)) {
                    cross_edges.push_back(edge_between(a, b));
                    arc_corner.push_back(b);
                }
            }
            if (cross_edges.empty()) continue;

            Vec3 fp0 = corner_pos(cyc[0]), fp1 = corner_pos(cyc[1]), fp2 = corner_pos(cyc[2]);
            Vec3 fnormal = (fp1 - fp0).cross(fp2 - fp0).normalized();

            auto emit = [&](int ia, int ib) {
                // Crossing points at edge midpoints suffice for topology.
                int ea = cross_edges[ia], eb = cross_edges[ib];
                Vec3 pa = (corner_pos(kEdge[ea][0]) + corner_pos(kEdge[ea][1])) * 0.5;
                Vec3 pb = (corner_pos(kEdge[eb][0]) + corner_pos(kEdge[eb][1])) * 0.5;
                // The arc cut off by this segment is uniform-sign; direct the
                // segment so the inside region sits on its right (seen from
                // outside the cube), which makes the fan triangles wind with
                // outward normals.
                Vec3 arc_p = corner_pos(arc_corner[ia]);
                Vec3 left = fnormal.cross(pb - pa);
                bool arc_inside = inside(arc_corner[ia]);
                bool arc_on_left = left.dot(arc_p - (pa + pb) * 0.5) > 0;
                if (arc_inside != arc_on_left)
                    segs.push_back({f, ea, eb});
                else
                    segs.push_back({f, eb, ea});
            };

            if (cross_edges.size() == 2) {
                emit(0, 1);
            } else {  // 4 crossings: pair so each inside corner is cut off alone
                if (inside(arc_corner[0])) {
                    emit(0, 1);
                    emit(2, 3);
                } else {
                    emit(1, 2);
                    emit(3, 0);
                }
            }
        }
        if (segs.empty()) continue;

        // Chain directed segments into loops (each edge has one incoming and
        // one outgoing segment), then fan-triangulate.
        std::vector<bool> used(segs.size(), false);
        for (size_t start = 0; start < segs.size(); ++start) {
            if (used[start]) continue;
            std::vector<int> loop;  // edge ids
            int cur = int(start);
            while (!used[cur]) {
                used[cur] = true;
                loop.push_back(segs[cur].from_edge);
                int want = segs[cur].to_edge;
                int next = -1;
                for (size_t j = 0; j < segs.size(); ++j)
                    if (!used[j] && segs[j].from_edge == want) {
                        next = int(j);
                        break;
                    }
                if (next < 0) break;  // loop closed
                cur = next;
            }
            for (size_t i = 1; i + 1 < loop.size(); ++i)
                table[config].push_back({loop[0], loop[int(i)], loop[int(i) + 1]});
        }
    }
    return table;
}

}  // namespace

const std::vector<std::array<int, 3>>& case_triangles(int config) {
    static const std::array<std::vector<std::array<int, 3>>, 256> table = build_table();
    return table[config];
}

}  // namespace mc

}  // namespace invrend
