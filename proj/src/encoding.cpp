#include "invrend/encoding.hpp"

namespace invrend {

std::vector<double> encode(std::span<const double> x, const PositionalEncoding& enc) {
    const int d = int(x.size());
    std::vector<double> out;
    out.reserve(enc.out_dim(d));
    if (enc.include_input) out.insert(out.end(), x.begin(), x.end());
    for (int j = 0; j < enc.num_frequencies; ++j) {
        const double f = enc.frequency(j);
        for (int c = 0; c < d; ++c) out.push_back(std::sin(f * x[c]));
        for (int c = 0; c < d; ++c) out.push_back(std::cos(f * x[c]));
    }
    return out;
}

void encode_jac_column(std::span<const double> x, const PositionalEncoding& enc, int k,
                       std::span<double> out) {
    const int d = int(x.size());
    std::fill(out.begin(), out.end(), 0.0);
    int off = 0;
    if (enc.include_input) {
        out[k] = 1.0;
        off = d;
    }
    for (int j = 0; j < enc.num_frequencies; ++j) {
        const double f = enc.frequency(j);
        out[off + k] = f * std::cos(f * x[k]);
        out[off + d + k] = -f * std::sin(f * x[k]);
        off += 2 * d;
    }
}

NodeId record_encode(GradientTape& t, NodeId x, const PositionalEncoding& enc) {
    const int d = t.length(x);
    std::vector<NodeId> parts;
    if (enc.include_input) parts.push_back(x);
    for (int j = 0; j < enc.num_frequencies; ++j) {
        NodeId scaled = t.scale_shift(x, enc.frequency(j));
        parts.push_back(t.sin_(scaled));
        parts.push_back(t.cos_(scaled));
    }
    if (parts.size() == 1) return parts[0];
    (void)d;
    return t.concat(parts);
}

EncodedWithJac record_encode_jac(GradientTape& t, NodeId x, const PositionalEncoding& enc) {
    const int d = t.length(x);
    if (d != 3) throw std::invalid_argument("record_encode_jac expects a 3-vector");
    std::vector<NodeId> parts;
    std::vector<NodeId> sins(enc.num_frequencies), coss(enc.num_frequencies);
    if (enc.include_input) parts.push_back(x);
    for (int j = 0; j < enc.num_frequencies; ++j) {
        NodeId scaled = t.scale_shift(x, enc.frequency(j));
        sins[j] = t.sin_(scaled);
        coss[j] = t.cos_(scaled);
        parts.push_back(sins[j]);
        parts.push_back(coss[j]);
    }
    EncodedWithJac out;
    out.enc = parts.size() == 1 ? parts[0] : t.concat(parts);
    const int out_len = enc.out_dim(d);
    for (int k = 0; k < 3; ++k) {
        std::vector<PackEntry> entries;
        int off = 0;
        if (enc.include_input) {
            entries.push_back({kNoNode, 0, k, 1.0});
            off = d;
        }
        for (int j = 0; j < enc.num_frequencies; ++j) {
            const double f = enc.frequency(j);
            entries.push_back({coss[j], k, off + k, f});
            entries.push_back({sins[j], k, off + d + k, -f});
            off += 2 * d;
        }
        out.jac[k] = t.pack_scaled(entries, out_len);
    }
    return out;
}

}  // namespace invrend
