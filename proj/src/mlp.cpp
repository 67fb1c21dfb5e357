#include "invrend/mlp.hpp"

#include <cassert>
#include <cstring>

namespace invrend {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double softplus_val(double z, double k) {
    double kz = k * z;
    if (kz > 30.0) return z;
    return std::log1p(std::exp(kz)) / k;
}
inline double sigmoid_val(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace

int MlpSpec::layout(int offset) {
    layers.clear();
    int cur = offset;
    for (int l = 0; l <= depth; ++l) {
        Layer lay;
        lay.in = (l == 0) ? in_dim : width;
        if (l == skip_layer && l > 0) lay.in = width + in_dim;
        lay.out = (l == depth) ? out_dim : width;
        lay.w_off = cur;
        cur += lay.in * lay.out;
        lay.b_off = cur;
        cur += lay.out;
        layers.push_back(lay);
    }
    return cur;
}

int MlpSpec::param_count() const {
    int n = 0;
    for (const Layer& l : layers) n += l.in * l.out + l.out;
    return n;
}

int MlpSpec::scratch_size() const {
    const int m = width + in_dim;
    return 8 * m;
}

void MlpSpec::forward(const double* params, std::span<const double> input, std::span<double> out,
                      std::vector<double>& scratch) const {
    assert(int(input.size()) == in_dim && int(out.size()) == out_dim);
    const int m = width + in_dim;
    if (int(scratch.size()) < 2 * m) scratch.resize(2 * m);
    double* a = scratch.data();
    double* z = scratch.data() + m;
    std::memcpy(a, input.data(), sizeof(double) * in_dim);
    int alen = in_dim;
    for (int l = 0; l <= depth; ++l) {
        const Layer& lay = layers[l];
        if (l == skip_layer && l > 0) {
            for (int i = 0; i < alen; ++i) a[i] *= kInvSqrt2;
            for (int i = 0; i < in_dim; ++i) a[alen + i] = input[i] * kInvSqrt2;
            alen += in_dim;
        }
        assert(alen == lay.in);
        const double* W = params + lay.w_off;
        const double* b = params + lay.b_off;
        double* dst = (l == depth) ? out.data() : z;
        for (int r = 0; r < lay.out; ++r) {
            const double* wr = W + size_t(r) * lay.in;
            double s = b[r];
            for (int c = 0; c < lay.in; ++c) s += wr[c] * a[c];
            dst[r] = s;
        }
        if (l == depth) {
            if (head == Head::Sigmoid)
                // Affine squeeze keeps the range strictly open even when the
                // sigmoid saturates to 1.0 in floating point.
                for (int r = 0; r < out_dim; ++r)
                    out[r] = 1e-9 + (1.0 - 2e-9) * sigmoid_val(out[r]);
        } else {
            for (int r = 0; r < lay.out; ++r) a[r] = softplus_val(z[r], act_k);
            alen = lay.out;
        }
    }
}

void MlpSpec::forward_jac(const double* params, std::span<const double> input,
                          const double* in_jac, std::span<double> out, double* out_jac,
                          std::vector<double>& scratch) const {
    assert(head == Head::Linear);
    const int m = width + in_dim;
    if (int(scratch.size()) < 8 * m) scratch.resize(8 * m);
    double* a = scratch.data();
    double* z = a + m;
    double* J = z + m;        // 3 columns of length m
    double* Jz = J + 3 * m;   // 3 columns of length m
    std::memcpy(a, input.data(), sizeof(double) * in_dim);
    for (int k = 0; k < 3; ++k)
        std::memcpy(J + k * m, in_jac + k * in_dim, sizeof(double) * in_dim);
    int alen = in_dim;
    for (int l = 0; l <= depth; ++l) {
        const Layer& lay = layers[l];
        if (l == skip_layer && l > 0) {
            for (int i = 0; i < alen; ++i) a[i] *= kInvSqrt2;
            for (int i = 0; i < in_dim; ++i) a[alen + i] = input[i] * kInvSqrt2;
            for (int k = 0; k < 3; ++k) {
                double* Jk = J + k * m;
                for (int i = 0; i < alen; ++i) Jk[i] *= kInvSqrt2;
                for (int i = 0; i < in_dim; ++i) Jk[alen + i] = in_jac[k * in_dim + i] * kInvSqrt2;
            }
            alen += in_dim;
        }
        const double* W = params + lay.w_off;
        const double* b = params + lay.b_off;
        double* zdst = (l == depth) ? out.data() : z;
        double* Jdst = (l == depth) ? out_jac : Jz;
        const int jstride = (l == depth) ? out_dim : m;
        for (int r = 0; r < lay.out; ++r) {
            const double* wr = W + size_t(r) * lay.in;
            double s = b[r], j0 = 0, j1 = 0, j2 = 0;
            const double* Ja0 = J;
            const double* Ja1 = J + m;
            const double* Ja2 = J + 2 * m;
            for (int c = 0; c < lay.in; ++c) {
                const double w = wr[c];
                s += w * a[c];
                j0 += w * Ja0[c];
                j1 += w * Ja1[c];
                j2 += w * Ja2[c];
            }
            zdst[r] = s;
            Jdst[0 * jstride + r] = j0;
            Jdst[1 * jstride + r] = j1;
            Jdst[2 * jstride + r] = j2;
        }
        if (l != depth) {
            for (int r = 0; r < lay.out; ++r) {
                const double sp = sigmoid_val(act_k * z[r]);
                a[r] = softplus_val(z[r], act_k);
                J[0 * m + r] = sp * Jz[0 * m + r];
                J[1 * m + r] = sp * Jz[1 * m + r];
                J[2 * m + r] = sp * Jz[2 * m + r];
            }
            alen = lay.out;
        }
    }
}

NodeId MlpSpec::record(GradientTape& t, NodeId input) const {
    NodeId a = input;
    for (int l = 0; l <= depth; ++l) {
        const Layer& lay = layers[l];
        if (l == skip_layer && l > 0) {
            NodeId parts[2] = {a, input};
            a = t.scale_shift(t.concat(parts), kInvSqrt2);
        }
        NodeId z = t.matvec(lay.w_off, lay.out, a, lay.b_off);
        if (l == depth)
            return head == Head::Sigmoid ? t.scale_shift(t.sigmoid_k(z, 1.0), 1.0 - 2e-9, 1e-9)
                                         : z;
        a = t.softplus_k(z, act_k);
    }
    return a;
}

MlpSpec::AugNodes MlpSpec::record_jac(GradientTape& t, NodeId input,
                                      const std::array<NodeId, 3>& in_jac) const {
    assert(head == Head::Linear);
    NodeId a = input;
    std::array<NodeId, 3> J = in_jac;
    for (int l = 0; l <= depth; ++l) {
        const Layer& lay = layers[l];
        if (l == skip_layer && l > 0) {
            NodeId parts[2] = {a, input};
            a = t.scale_shift(t.concat(parts), kInvSqrt2);
            for (int k = 0; k < 3; ++k) {
                NodeId jparts[2] = {J[k], in_jac[k]};
                J[k] = t.scale_shift(t.concat(jparts), kInvSqrt2);
            }
        }
        NodeId z = t.matvec(lay.w_off, lay.out, a, lay.b_off);
        std::array<NodeId, 3> Jz;
        for (int k = 0; k < 3; ++k) Jz[k] = t.matvec(lay.w_off, lay.out, J[k]);
        if (l == depth) return {z, Jz};
        NodeId sp = t.sigmoid_k(z, act_k);
        a = t.softplus_k(z, act_k);
        for (int k = 0; k < 3; ++k) J[k] = t.mul(Jz[k], sp);
    }
    return {a, J};
}

void init_he(Rng& rng, MlpSpec& spec, std::vector<double>& params, double head_bias) {
    for (size_t l = 0; l < spec.layers.size(); ++l) {
        const MlpSpec::Layer& lay = spec.layers[l];
        const double std = std::sqrt(2.0 / lay.in);
        for (int i = 0; i < lay.in * lay.out; ++i) params[lay.w_off + i] = std * rng.normal();
        const bool last = l + 1 == spec.layers.size();
        for (int r = 0; r < lay.out; ++r) params[lay.b_off + r] = last ? head_bias : 0.0;
    }
}

void init_geometric(Rng& rng, MlpSpec& spec, std::vector<double>& params, double radius,
                    int raw_coord_dim) {
    for (size_t l = 0; l < spec.layers.size(); ++l) {
        const MlpSpec::Layer& lay = spec.layers[l];
        const bool last = l + 1 == spec.layers.size();
        if (!last) {
            const double std = std::sqrt(2.0) / std::sqrt(double(lay.out));
            for (int i = 0; i < lay.in * lay.out; ++i) params[lay.w_off + i] = std * rng.normal();
            for (int r = 0; r < lay.out; ++r) params[lay.b_off + r] = 0.0;
            if (l == 0) {
                // Encoding channels beyond the raw coordinates start silent.
                for (int r = 0; r < lay.out; ++r)
                    for (int c = raw_coord_dim; c < lay.in; ++c)
                        params[lay.w_off + size_t(r) * lay.in + c] = 0.0;
            } else if (int(l) == spec.skip_layer) {
                // Appended skip input: keep raw coordinates, silence the rest.
                for (int r = 0; r < lay.out; ++r)
                    for (int c = spec.width + raw_coord_dim; c < lay.in; ++c)
                        params[lay.w_off + size_t(r) * lay.in + c] = 0.0;
            }
        } else {
            const double mean = std::sqrt(kPi) / std::sqrt(double(lay.in));
            for (int c = 0; c < lay.in; ++c)
                params[lay.w_off + c] = mean + 1e-4 * rng.normal();
            for (int r = 1; r < lay.out; ++r)
                for (int c = 0; c < lay.in; ++c)
                    params[lay.w_off + size_t(r) * lay.in + c] = 1e-4 * rng.normal();
            params[lay.b_off] = -radius;
            for (int r = 1; r < lay.out; ++r) params[lay.b_off + r] = 0.0;
        }
    }
}

}  // namespace invrend
