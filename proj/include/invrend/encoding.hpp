#pragma once

#include <array>
#include <span>
#include <vector>

#include "invrend/tape.hpp"

namespace invrend {

// NeRF-style positional encoding with frequency ladder pi * 2^j.
// Layout: [x, sin(f0*x), cos(f0*x), sin(f1*x), cos(f1*x), ...] with each
// block holding all input components.
struct PositionalEncoding {
    int num_frequencies = 6;
    bool include_input = true;

    int out_dim(int in_dim) const {
        return in_dim * ((include_input ? 1 : 0) + 2 * num_frequencies);
    }
    double frequency(int j) const { return kPi * double(1 << j); }
};

std::vector<double> encode(std::span<const double> x, const PositionalEncoding& enc);

// d(encode)/dx_k for one input component; same layout as the encoding.
void encode_jac_column(std::span<const double> x, const PositionalEncoding& enc, int k,
                       std::span<double> out);

NodeId record_encode(GradientTape& t, NodeId x, const PositionalEncoding& enc);

struct EncodedWithJac {
    NodeId enc;
    std::array<NodeId, 3> jac;  // d(enc)/dx_k, k = 0..2
};
// Requires a 3-component input node.
EncodedWithJac record_encode_jac(GradientTape& t, NodeId x, const PositionalEncoding& enc);

}  // namespace invrend
