#pragma once

#include <span>
#include <vector>

#include "invrend/core.hpp"

namespace invrend {

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

enum class Op : uint8_t {
    Const,
    Input,      // like Const, but its cotangent is readable after backward()
    ParamVec,   // view of a slice of the bound parameter vector
    MatVec,     // W * a (+ bias), W and bias living in the parameter vector
    Add, Sub, Mul, Div,            // elementwise; b may be a scalar node (broadcast)
    AddScaled,                     // c0*a + c1*b
    ScaleShift,                    // c0*a + c1
    Dot, Sum, Mean, Norm,
    Concat, Slice,
    PackScaled,                    // scatter-gather with per-entry scale
    SoftplusK, SigmoidK, Sin, Cos, Sqrt, Square, Abs, Exp, Log, PowC,
    Clamp, AcosClamp,
    ConvRows, ConvCols, Down2, Crop2,
};

struct PackEntry {
    NodeId src = kNoNode;  // kNoNode: constant contribution of `scale`
    int32_t src_idx = 0;
    int32_t dst_idx = 0;
    double scale = 1.0;
};

struct TapeNode {
    Op op;
    NodeId a = kNoNode, b = kNoNode;
    int32_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    double c0 = 0, c1 = 0;
    int64_t val = 0;   // offset into the value arena
    int32_t len = 0;   // output length
};

// Reverse-mode tape over small dense vectors. Recording is eager: every op
// computes its value immediately, so intermediate results can be inspected
// (and branched on) while building the graph. backward() walks the nodes in
// reverse creation order, which makes gradient accumulation deterministic.
// replay() re-runs the whole forward pass against the currently bound
// parameter vector; perturbing one parameter and replaying is the finite-
// difference oracle used throughout the test suites.
class GradientTape {
  public:
    explicit GradientTape(const std::vector<double>* params = nullptr) : params_(params) {}

    void bind(const std::vector<double>* params) { params_ = params; }
    const std::vector<double>* params() const { return params_; }

    void reset() {
        nodes_.clear();
        values_.clear();
        extra_.clear();
        pack_.clear();
        kernels_.clear();
    }
    size_t num_nodes() const { return nodes_.size(); }

    // ---- leaves ----
    NodeId constant(std::span<const double> v);
    NodeId constant(double v) { return constant(std::span<const double>(&v, 1)); }
    NodeId constant3(const Vec3& v);
    NodeId input(std::span<const double> v);
    NodeId param_vec(int offset, int len);

    // ---- ops ----
    NodeId matvec(int w_offset, int rows, NodeId x, int bias_offset = -1);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId add_scaled(NodeId a, double ca, NodeId b, double cb);
    NodeId scale_shift(NodeId a, double scale, double shift = 0.0);
    NodeId dot(NodeId a, NodeId b);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId norm(NodeId a);
    NodeId concat(std::span<const NodeId> parts);
    NodeId slice(NodeId a, int start, int len);
    NodeId pack_scaled(std::span<const PackEntry> entries, int out_len);
    NodeId softplus_k(NodeId a, double k);
    NodeId sigmoid_k(NodeId a, double k);
    NodeId sin_(NodeId a);
    NodeId cos_(NodeId a);
    NodeId sqrt_(NodeId a);
    NodeId square(NodeId a);
    NodeId abs_(NodeId a);
    NodeId exp_(NodeId a);
    NodeId log_(NodeId a);
    NodeId pow_const(NodeId a, double expo);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId acos_clamp(NodeId a);
    // Image ops treat the node as a row-major w*h single-channel image.
    NodeId conv_rows(NodeId a, int w, int h, std::span<const double> kernel);
    NodeId conv_cols(NodeId a, int w, int h, std::span<const double> kernel);
    NodeId down2(NodeId a, int w, int h);
    NodeId crop2(NodeId a, int w, int h, int x0, int y0, int cw, int ch);

    // ---- execution ----
    std::span<const double> value(NodeId id) const {
        const TapeNode& n = nodes_[id];
        return {values_.data() + n.val, size_t(n.len)};
    }
    double scalar(NodeId id) const { return values_[nodes_[id].val]; }
    int length(NodeId id) const { return nodes_[id].len; }

    // Recomputes every node value from the bound parameters.
    void replay();

    // Runs reverse-mode from `out` with the given seed cotangent. Faults if
    // the seed length does not match the output. Parameter gradients
    // accumulate into an internal buffer (zeroed per call) read through
    // param_gradient(); input-leaf cotangents are read through grad().
    void backward(NodeId out, std::span<const double> seed);
    void backward_scalar(NodeId out, double seed = 1.0) {
        backward(out, std::span<const double>(&seed, 1));
    }
    const std::vector<double>& param_gradient() const { return param_grad_; }
    std::span<const double> grad(NodeId id) const {
        const TapeNode& n = nodes_[id];
        return {grads_.data() + n.val, size_t(n.len)};
    }

  private:
    NodeId push(TapeNode n);
    void eval_node(int32_t i);
    void backprop_node(int32_t i);

    const std::vector<double>* params_;
    std::vector<TapeNode> nodes_;
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<NodeId> extra_;        // parent lists for Concat
    std::vector<PackEntry> pack_;
    std::vector<std::vector<double>> kernels_;
    std::vector<double> param_grad_;
};

}  // namespace invrend
