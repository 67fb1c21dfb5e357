#pragma once

#include <span>
#include <string>
#include <vector>

#include "invrend/tape.hpp"

namespace invrend {

// Fully connected network over a flat parameter vector. Hidden layers use a
// sharpened softplus so every derivative the renderer needs is smooth; the
// optional skip connection re-concatenates the raw input (scaled by 1/sqrt2)
// before the given hidden layer, as is usual for coordinate networks.
struct MlpSpec {
    std::string name;
    int in_dim = 0;
    int width = 0;
    int depth = 0;       // number of hidden layers
    int out_dim = 0;
    int skip_layer = -1; // hidden-layer index whose input gets the skip concat
    double act_k = 100.0;
    enum class Head { Linear, Sigmoid } head = Head::Linear;

    struct Layer {
        int w_off = 0, b_off = 0, in = 0, out = 0;
    };
    std::vector<Layer> layers;

    // Assigns parameter offsets starting at `offset`; returns one past the end.
    int layout(int offset);
    int param_count() const;
    int scratch_size() const;

    // Primal paths. `scratch` must hold scratch_size() doubles.
    void forward(const double* params, std::span<const double> input, std::span<double> out,
                 std::vector<double>& scratch) const;
    // Forward plus the 3-column input Jacobian chain. in_jac / out_jac are
    // column-major: column k occupies [k*in_dim, (k+1)*in_dim).
    void forward_jac(const double* params, std::span<const double> input, const double* in_jac,
                     std::span<double> out, double* out_jac, std::vector<double>& scratch) const;

    // Tape paths.
    NodeId record(GradientTape& t, NodeId input) const;
    struct AugNodes {
        NodeId out;
        std::array<NodeId, 3> jac;
    };
    AugNodes record_jac(GradientTape& t, NodeId input, const std::array<NodeId, 3>& in_jac) const;
};

// Weight initializers.
void init_he(Rng& rng, MlpSpec& spec, std::vector<double>& params, double head_bias = 0.0);
// SDF-style geometric initialization: the network starts out close to
// ||x|| - radius. Positional-encoding columns beyond the raw coordinates are
// zeroed in the first (and skip) layer; the scalar output row gets the
// sqrt(pi/in) mean with bias -radius.
void init_geometric(Rng& rng, MlpSpec& spec, std::vector<double>& params, double radius,
                    int raw_coord_dim = 3);

}  // namespace invrend
