#include "invrend/tape.hpp"

#include <cassert>
#include <cstring>

namespace invrend {

namespace {
inline double softplus_val(double z, double k) {
    double kz = k * z;
    if (kz > 30.0) return z;
    return std::log1p(std::exp(kz)) / k;
}
inline double sigmoid_val(double z) {
    if (z >= 0) {
        double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace

NodeId GradientTape::push(TapeNode n) {
    n.val = int64_t(values_.size());
    values_.resize(values_.size() + n.len);
    nodes_.push_back(n);
    NodeId id = NodeId(nodes_.size() - 1);
    eval_node(id);
    return id;
}

NodeId GradientTape::constant(std::span<const double> v) {
    TapeNode n;
    n.op = Op::Const;
    n.len = int32_t(v.size());
    n.val = int64_t(values_.size());
    values_.insert(values_.end(), v.begin(), v.end());
    nodes_.push_back(n);
    return NodeId(nodes_.size() - 1);
}

NodeId GradientTape::constant3(const Vec3& v) {
    double d[3] = {v.x, v.y, v.z};
    return constant(std::span<const double>(d, 3));
}

NodeId GradientTape::input(std::span<const double> v) {
    NodeId id = constant(v);
    nodes_[id].op = Op::Input;
    return id;
}

NodeId GradientTape::param_vec(int offset, int len) {
    TapeNode n;
    n.op = Op::ParamVec;
    n.i0 = offset;
    n.len = len;
    return push(n);
}

NodeId GradientTape::matvec(int w_offset, int rows, NodeId x, int bias_offset) {
    TapeNode n;
    n.op = Op::MatVec;
    n.a = x;
    n.i0 = w_offset;
    n.i1 = bias_offset;
    n.len = rows;
    return push(n);
}

#define BINOP(name, opcode)                                 \
    NodeId GradientTape::name(NodeId a, NodeId b) {         \
        TapeNode n;                                         \
        n.op = opcode;                                      \
        n.a = a;                                            \
        n.b = b;                                            \
        n.len = nodes_[a].len;                              \
        assert(nodes_[b].len == n.len || nodes_[b].len == 1); \
        return push(n);                                     \
    }
BINOP(add, Op::Add)
BINOP(sub, Op::Sub)
BINOP(mul, Op::Mul)
BINOP(div, Op::Div)
#undef BINOP

NodeId GradientTape::add_scaled(NodeId a, double ca, NodeId b, double cb) {
    TapeNode n;
    n.op = Op::AddScaled;
    n.a = a;
    n.b = b;
    n.c0 = ca;
    n.c1 = cb;
    n.len = nodes_[a].len;
    assert(nodes_[b].len == n.len);
    return push(n);
}

NodeId GradientTape::scale_shift(NodeId a, double scale, double shift) {
    TapeNode n;
    n.op = Op::ScaleShift;
    n.a = a;
    n.c0 = scale;
    n.c1 = shift;
    n.len = nodes_[a].len;
    return push(n);
}

NodeId GradientTape::dot(NodeId a, NodeId b) {
    TapeNode n;
    n.op = Op::Dot;
    n.a = a;
    n.b = b;
    n.len = 1;
    assert(nodes_[a].len == nodes_[b].len);
    return push(n);
}

NodeId GradientTape::sum(NodeId a) {
    TapeNode n;
    n.op = Op::Sum;
    n.a = a;
    n.len = 1;
    return push(n);
}

NodeId GradientTape::mean(NodeId a) {
    TapeNode n;
    n.op = Op::Mean;
    n.a = a;
    n.len = 1;
    return push(n);
}

NodeId GradientTape::norm(NodeId a) {
    TapeNode n;
    n.op = Op::Norm;
    n.a = a;
    n.len = 1;
    return push(n);
}

NodeId GradientTape::concat(std::span<const NodeId> parts) {
    TapeNode n;
    n.op = Op::Concat;
    n.i0 = int32_t(parts.size());
    n.i1 = int32_t(extra_.size());
    int len = 0;
    for (NodeId p : parts) {
        extra_.push_back(p);
        len += nodes_[p].len;
    }
    n.len = len;
    return push(n);
}

NodeId GradientTape::slice(NodeId a, int start, int len) {
    TapeNode n;
    n.op = Op::Slice;
    n.a = a;
    n.i0 = start;
    n.len = len;
    assert(start + len <= nodes_[a].len);
    return push(n);
}

NodeId GradientTape::pack_scaled(std::span<const PackEntry> entries, int out_len) {
    TapeNode n;
    n.op = Op::PackScaled;
    n.i0 = int32_t(entries.size());
    n.i1 = int32_t(pack_.size());
    pack_.insert(pack_.end(), entries.begin(), entries.end());
    n.len = out_len;
    return push(n);
}

#define UNOP(name, opcode)                          \
    NodeId GradientTape::name(NodeId a) {           \
        TapeNode n;                                 \
        n.op = opcode;                              \
        n.a = a;                                    \
        n.len = nodes_[a].len;                      \
        return push(n);                             \
    }
UNOP(sin_, Op::Sin)
UNOP(cos_, Op::Cos)
UNOP(sqrt_, Op::Sqrt)
UNOP(square, Op::Square)
UNOP(abs_, Op::Abs)
UNOP(exp_, Op::Exp)
UNOP(log_, Op::Log)
UNOP(acos_clamp, Op::AcosClamp)
#undef UNOP

NodeId GradientTape::softplus_k(NodeId a, double k) {
    TapeNode n;
    n.op = Op::SoftplusK;
    n.a = a;
    n.c0 = k;
    n.len = nodes_[a].len;
    return push(n);
}

NodeId GradientTape::sigmoid_k(NodeId a, double k) {
    TapeNode n;
    n.op = Op::SigmoidK;
    n.a = a;
    n.c0 = k;
    n.len = nodes_[a].len;
    return push(n);
}

NodeId GradientTape::pow_const(NodeId a, double expo) {
    TapeNode n;
    n.op = Op::PowC;
    n.a = a;
    n.c0 = expo;
    n.len = nodes_[a].len;
    return push(n);
}

NodeId GradientTape::clamp(NodeId a, double lo, double hi) {
    TapeNode n;
    n.op = Op::Clamp;
    n.a = a;
    n.c0 = lo;
    n.c1 = hi;
    n.len = nodes_[a].len;
    return push(n);
}

NodeId GradientTape::conv_rows(NodeId a, int w, int h, std::span<const double> kernel) {
    TapeNode n;
    n.op = Op::ConvRows;
    n.a = a;
    n.i0 = w;
    n.i1 = h;
    n.i2 = int32_t(kernels_.size());
    kernels_.emplace_back(kernel.begin(), kernel.end());
    n.len = w * h;
    assert(nodes_[a].len == w * h && kernel.size() % 2 == 1);
    return push(n);
}

NodeId GradientTape::conv_cols(NodeId a, int w, int h, std::span<const double> kernel) {
    NodeId id = conv_rows(a, w, h, kernel);
    nodes_[id].op = Op::ConvCols;
    eval_node(id);
    return id;
}

NodeId GradientTape::down2(NodeId a, int w, int h) {
    TapeNode n;
    n.op = Op::Down2;
    n.a = a;
    n.i0 = w;
    n.i1 = h;
    n.len = ((w + 1) / 2) * ((h + 1) / 2);
    return push(n);
}

NodeId GradientTape::crop2(NodeId a, int w, int h, int x0, int y0, int cw, int ch) {
    TapeNode n;
    n.op = Op::Crop2;
    n.a = a;
    n.i0 = w;
    n.i1 = h;
    n.i2 = x0;
    n.i3 = y0;
    n.c0 = double(cw);
    n.c1 = double(ch);
    n.len = cw * ch;
    assert(x0 + cw <= w && y0 + ch <= h);
    return push(n);
}

void GradientTape::eval_node(int32_t i) {
    TapeNode& n = nodes_[i];
    double* out = values_.data() + n.val;
    const double* av = n.a >= 0 ? values_.data() + nodes_[n.a].val : nullptr;
    const double* bv = n.b >= 0 ? values_.data() + nodes_[n.b].val : nullptr;
    const int alen = n.a >= 0 ? nodes_[n.a].len : 0;
    const int blen = n.b >= 0 ? nodes_[n.b].len : 0;

    switch (n.op) {
        case Op::Const:
        case Op::Input:
            break;
        case Op::ParamVec:
            std::memcpy(out, params_->data() + n.i0, sizeof(double) * n.len);
            break;
        case Op::MatVec: {
            const double* W = params_->data() + n.i0;
            const double* bias = n.i1 >= 0 ? params_->data() + n.i1 : nullptr;
            for (int r = 0; r < n.len; ++r) {
                const double* wr = W + size_t(r) * alen;
                double s = bias ? bias[r] : 0.0;
                for (int c = 0; c < alen; ++c) s += wr[c] * av[c];
                out[r] = s;
            }
            break;
        }
        case Op::Add:
            if (blen == 1)
                for (int j = 0; j < n.len; ++j) out[j] = av[j] + bv[0];
            else
                for (int j = 0; j < n.len; ++j) out[j] = av[j] + bv[j];
            break;
        case Op::Sub:
            if (blen == 1)
                for (int j = 0; j < n.len; ++j) out[j] = av[j] - bv[0];
            else
                for (int j = 0; j < n.len; ++j) out[j] = av[j] - bv[j];
            break;
        case Op::Mul:
            if (blen == 1)
                for (int j = 0; j < n.len; ++j) out[j] = av[j] * bv[0];
            else
                for (int j = 0; j < n.len; ++j) out[j] = av[j] * bv[j];
            break;
        case Op::Div:
            if (blen == 1)
                for (int j = 0; j < n.len; ++j) out[j] = av[j] / bv[0];
            else
                for (int j = 0; j < n.len; ++j) out[j] = av[j] / bv[j];
            break;
        case Op::AddScaled:
            for (int j = 0; j < n.len; ++j) out[j] = n.c0 * av[j] + n.c1 * bv[j];
            break;
        case Op::ScaleShift:
            for (int j = 0; j < n.len; ++j) out[j] = n.c0 * av[j] + n.c1;
            break;
        case Op::Dot: {
            double s = 0;
            for (int j = 0; j < alen; ++j) s += av[j] * bv[j];
            out[0] = s;
            break;
        }
        case Op::Sum: {
            double s = 0;
            for (int j = 0; j < alen; ++j) s += av[j];
            out[0] = s;
            break;
        }
        case Op::Mean: {
            double s = 0;
            for (int j = 0; j < alen; ++j) s += av[j];
            out[0] = s / alen;
            break;
        }
        case Op::Norm: {
            double s = 0;
            for (int j = 0; j < alen; ++j) s += av[j] * av[j];
            out[0] = std::sqrt(s);
            break;
        }
        case Op::Concat: {
            int off = 0;
            for (int p = 0; p < n.i0; ++p) {
                const TapeNode& src = nodes_[extra_[n.i1 + p]];
                std::memcpy(out + off, values_.data() + src.val, sizeof(double) * src.len);
                off += src.len;
            }
            break;
        }
        case Op::Slice:
            std::memcpy(out, av + n.i0, sizeof(double) * n.len);
            break;
        case Op::PackScaled: {
            std::memset(out, 0, sizeof(double) * n.len);
            for (int e = 0; e < n.i0; ++e) {
                const PackEntry& pe = pack_[n.i1 + e];
                double v = pe.src == kNoNode ? 1.0 : values_[nodes_[pe.src].val + pe.src_idx];
                out[pe.dst_idx] += pe.scale * v;
            }
            break;
        }
        case Op::SoftplusK:
            for (int j = 0; j < n.len; ++j) out[j] = softplus_val(av[j], n.c0);
            break;
        case Op::SigmoidK:
            for (int j = 0; j < n.len; ++j) out[j] = sigmoid_val(n.c0 * av[j]);
            break;
        case Op::Sin:
            for (int j = 0; j < n.len; ++j) out[j] = std::sin(av[j]);
            break;
        case Op::Cos:
            for (int j = 0; j < n.len; ++j) out[j] = std::cos(av[j]);
            break;
        case Op::Sqrt:
            for (int j = 0; j < n.len; ++j) out[j] = std::sqrt(std::max(av[j], 0.0));
            break;
        case Op::Square:
            for (int j = 0; j < n.len; ++j) out[j] = av[j] * av[j];
            break;
        case Op::Abs:
            for (int j = 0; j < n.len; ++j) out[j] = std::abs(av[j]);
            break;
        case Op::Exp:
            for (int j = 0; j < n.len; ++j) out[j] = std::exp(av[j]);
            break;
        case Op::Log:
            for (int j = 0; j < n.len; ++j) out[j] = std::log(std::max(av[j], 1e-300));
            break;
        case Op::PowC:
            for (int j = 0; j < n.len; ++j) out[j] = std::pow(std::max(av[j], 0.0), n.c0);
            break;
        case Op::Clamp:
            for (int j = 0; j < n.len; ++j) out[j] = clampd(av[j], n.c0, n.c1);
            break;
        case Op::AcosClamp:
            for (int j = 0; j < n.len; ++j) out[j] = std::acos(clampd(av[j], -1.0, 1.0));
            break;
        case Op::ConvRows: {
            const auto& ker = kernels_[n.i2];
            const int r = int(ker.size()) / 2, w = n.i0, h = n.i1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0;
                    for (int k = 0; k < int(ker.size()); ++k) {
                        int xx = std::clamp(x + k - r, 0, w - 1);
                        s += ker[k] * av[y * w + xx];
                    }
                    out[y * w + x] = s;
                }
            break;
        }
        case Op::ConvCols: {
            const auto& ker = kernels_[n.i2];
            const int r = int(ker.size()) / 2, w = n.i0, h = n.i1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0;
                    for (int k = 0; k < int(ker.size()); ++k) {
                        int yy = std::clamp(y + k - r, 0, h - 1);
                        s += ker[k] * av[yy * w + x];
                    }
                    out[y * w + x] = s;
                }
            break;
        }
        case Op::Down2: {
            const int w = n.i0, h = n.i1, ow = (w + 1) / 2;
            const int oh = (h + 1) / 2;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) out[y * ow + x] = av[(2 * y) * w + 2 * x];
            break;
        }
        case Op::Crop2: {
            const int w = n.i0, cw = int(n.c0), ch = int(n.c1);
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x) out[y * cw + x] = av[(n.i3 + y) * w + (n.i2 + x)];
            break;
        }
    }
}

void GradientTape::replay() {
    for (int32_t i = 0; i < int32_t(nodes_.size()); ++i) eval_node(i);
}

void GradientTape::backward(NodeId out, std::span<const double> seed) {
    if (out < 0 || out >= NodeId(nodes_.size()))
        throw std::invalid_argument("backward: bad output node");
    if (int(seed.size()) != nodes_[out].len)
        throw std::invalid_argument("backward: seed shape mismatch");
    grads_.assign(values_.size(), 0.0);
    param_grad_.assign(params_ ? params_->size() : 0, 0.0);
    std::memcpy(grads_.data() + nodes_[out].val, seed.data(), sizeof(double) * seed.size());
    for (int32_t i = out; i >= 0; --i) backprop_node(i);
}

void GradientTape::backprop_node(int32_t i) {
    const TapeNode& n = nodes_[i];
    const double* g = grads_.data() + n.val;
    // Skip nodes whose cotangent is entirely zero.
    bool any = false;
    for (int j = 0; j < n.len && !any; ++j) any = g[j] != 0.0;
    if (!any) return;

    double* ga = n.a >= 0 ? grads_.data() + nodes_[n.a].val : nullptr;
    double* gb = n.b >= 0 ? grads_.data() + nodes_[n.b].val : nullptr;
    const double* av = n.a >= 0 ? values_.data() + nodes_[n.a].val : nullptr;
    const double* bv = n.b >= 0 ? values_.data() + nodes_[n.b].val : nullptr;
    const double* ov = values_.data() + n.val;
    const int alen = n.a >= 0 ? nodes_[n.a].len : 0;
    const int blen = n.b >= 0 ? nodes_[n.b].len : 0;

    switch (n.op) {
        case Op::Const:
        case Op::Input:
            break;
        case Op::ParamVec:
            for (int j = 0; j < n.len; ++j) param_grad_[n.i0 + j] += g[j];
            break;
        case Op::MatVec: {
            const double* W = params_->data() + n.i0;
            double* gw = param_grad_.data() + n.i0;
            for (int r = 0; r < n.len; ++r) {
                const double gr = g[r];
                if (gr == 0.0) continue;
                const double* wr = W + size_t(r) * alen;
                double* gwr = gw + size_t(r) * alen;
                for (int c = 0; c < alen; ++c) {
                    ga[c] += wr[c] * gr;
                    gwr[c] += av[c] * gr;
                }
            }
            if (n.i1 >= 0)
                for (int r = 0; r < n.len; ++r) param_grad_[n.i1 + r] += g[r];
            break;
        }
        case Op::Add:
            if (blen == 1) {
                double s = 0;
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j];
                    s += g[j];
                }
                gb[0] += s;
            } else
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j];
                    gb[j] += g[j];
                }
            break;
        case Op::Sub:
            if (blen == 1) {
                double s = 0;
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j];
                    s += g[j];
                }
                gb[0] -= s;
            } else
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j];
                    gb[j] -= g[j];
                }
            break;
        case Op::Mul:
            if (blen == 1) {
                double s = 0;
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += bv[0] * g[j];
                    s += av[j] * g[j];
                }
                gb[0] += s;
            } else
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += bv[j] * g[j];
                    gb[j] += av[j] * g[j];
                }
            break;
        case Op::Div:
            if (blen == 1) {
                double s = 0;
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j] / bv[0];
                    s += -av[j] / (bv[0] * bv[0]) * g[j];
                }
                gb[0] += s;
            } else
                for (int j = 0; j < n.len; ++j) {
                    ga[j] += g[j] / bv[j];
                    gb[j] += -av[j] / (bv[j] * bv[j]) * g[j];
                }
            break;
        case Op::AddScaled:
            for (int j = 0; j < n.len; ++j) {
                ga[j] += n.c0 * g[j];
                gb[j] += n.c1 * g[j];
            }
            break;
        case Op::ScaleShift:
            for (int j = 0; j < n.len; ++j) ga[j] += n.c0 * g[j];
            break;
        case Op::Dot:
            for (int j = 0; j < alen; ++j) {
                ga[j] += bv[j] * g[0];
                gb[j] += av[j] * g[0];
            }
            break;
        case Op::Sum:
            for (int j = 0; j < alen; ++j) ga[j] += g[0];
            break;
        case Op::Mean:
            for (int j = 0; j < alen; ++j) ga[j] += g[0] / alen;
            break;
        case Op::Norm: {
            if (ov[0] > 1e-300)
                for (int j = 0; j < alen; ++j) ga[j] += av[j] / ov[0] * g[0];
            break;
        }
        case Op::Concat: {
            int off = 0;
            for (int p = 0; p < n.i0; ++p) {
                const TapeNode& src = nodes_[extra_[n.i1 + p]];
                double* gs = grads_.data() + src.val;
                for (int j = 0; j < src.len; ++j) gs[j] += g[off + j];
                off += src.len;
            }
            break;
        }
        case Op::Slice:
            for (int j = 0; j < n.len; ++j) ga[n.i0 + j] += g[j];
            break;
        case Op::PackScaled:
            for (int e = 0; e < n.i0; ++e) {
                const PackEntry& pe = pack_[n.i1 + e];
                if (pe.src == kNoNode) continue;
                grads_[nodes_[pe.src].val + pe.src_idx] += pe.scale * g[pe.dst_idx];
            }
            break;
        case Op::SoftplusK:
            for (int j = 0; j < n.len; ++j) ga[j] += sigmoid_val(n.c0 * av[j]) * g[j];
            break;
        case Op::SigmoidK:
            for (int j = 0; j < n.len; ++j) ga[j] += n.c0 * ov[j] * (1.0 - ov[j]) * g[j];
            break;
        case Op::Sin:
            for (int j = 0; j < n.len; ++j) ga[j] += std::cos(av[j]) * g[j];
            break;
        case Op::Cos:
            for (int j = 0; j < n.len; ++j) ga[j] -= std::sin(av[j]) * g[j];
            break;
        case Op::Sqrt:
            for (int j = 0; j < n.len; ++j)
                if (ov[j] > 1e-150) ga[j] += 0.5 / ov[j] * g[j];
            break;
        case Op::Square:
            for (int j = 0; j < n.len; ++j) ga[j] += 2.0 * av[j] * g[j];
            break;
        case Op::Abs:
            for (int j = 0; j < n.len; ++j)
                ga[j] += (av[j] > 0 ? 1.0 : (av[j] < 0 ? -1.0 : 0.0)) * g[j];
            break;
        case Op::Exp:
            for (int j = 0; j < n.len; ++j) ga[j] += ov[j] * g[j];
            break;
        case Op::Log:
            for (int j = 0; j < n.len; ++j) ga[j] += g[j] / std::max(av[j], 1e-300);
            break;
        case Op::PowC:
            for (int j = 0; j < n.len; ++j) {
                double base = std::max(av[j], 0.0);
                if (base > 0) ga[j] += n.c0 * std::pow(base, n.c0 - 1.0) * g[j];
            }
            break;
        case Op::Clamp:
            for (int j = 0; j < n.len; ++j)
                if (av[j] > n.c0 && av[j] < n.c1) ga[j] += g[j];
            break;
        case Op::AcosClamp:
            for (int j = 0; j < n.len; ++j) {
                double t = av[j];
                if (std::abs(t) < 1.0 - 1e-12)
                    ga[j] += -1.0 / std::sqrt(1.0 - t * t) * g[j];
                // saturated: derivative defined as 0
            }
            break;
        case Op::ConvRows: {
            const auto& ker = kernels_[n.i2];
            const int r = int(ker.size()) / 2, w = n.i0, h = n.i1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gv = g[y * w + x];
                    if (gv == 0.0) continue;
                    for (int k = 0; k < int(ker.size()); ++k) {
                        int xx = std::clamp(x + k - r, 0, w - 1);
                        ga[y * w + xx] += ker[k] * gv;
                    }
                }
            break;
        }
        case Op::ConvCols: {
            const auto& ker = kernels_[n.i2];
            const int r = int(ker.size()) / 2, w = n.i0, h = n.i1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gv = g[y * w + x];
                    if (gv == 0.0) continue;
                    for (int k = 0; k < int(ker.size()); ++k) {
                        int yy = std::clamp(y + k - r, 0, h - 1);
                        ga[yy * w + x] += ker[k] * gv;
                    }
                }
            break;
        }
        case Op::Down2: {
            const int w = n.i0, ow = (w + 1) / 2, oh = (n.i1 + 1) / 2;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) ga[(2 * y) * w + 2 * x] += g[y * ow + x];
            break;
        }
        case Op::Crop2: {
            const int w = n.i0, cw = int(n.c0), ch = int(n.c1);
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x) ga[(n.i3 + y) * w + (n.i2 + x)] += g[y * cw + x];
            break;
        }
    }
}

}  // namespace invrend
