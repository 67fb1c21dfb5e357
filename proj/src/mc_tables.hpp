#pragma once

#include <array>
#include <vector>

namespace invrend {
namespace mc {

// Classic cube corner / edge numbering shared by the table generator and
// the mesh extractor.
extern const int kCorner[8][3];
extern const int kEdge[12][2];
extern const int kFace[6][4];

const std::vector<std::array<int, 3>>& case_triangles(int config);

}  // namespace mc
}  // namespace invrend
