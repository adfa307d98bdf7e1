#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tape.hpp"
#include "core/util.hpp"

namespace fvlab {

enum class MlpVariant { Plain, Gated };

MlpVariant mlp_variant_from_string(const std::string& s);
std::string mlp_variant_to_string(MlpVariant v);

/// One affine stage. Plain layers use (w, b); gated layers additionally
/// carry the right/final sets and compute
///   (GeLU(x Wl + bl) .* (x Wr + br)) Wf + bf.
struct MlpLayer {
    int in = 0, out = 0;
    std::vector<double> w, b;        // plain: the affine map; gated: Wl, bl
    std::vector<double> wr, br;      // gated only
    std::vector<double> wf, bf;      // gated only, out x out and out
};

/// m-layer perceptron. Plain: ReLU between layers, none after the last.
struct MlpParams {
    MlpVariant variant = MlpVariant::Plain;
    std::vector<MlpLayer> layers;

    int input_width() const { return layers.empty() ? 0 : layers.front().in; }
    int output_width() const { return layers.empty() ? 0 : layers.back().out; }
    int layer_count() const { return static_cast<int>(layers.size()); }
};

/// Zero-initialized architecture: widths in -> d (m-1 times) -> out.
MlpParams make_mlp(MlpVariant variant, int in, int out, int m, int d);

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) over all tensors.
void init_mlp(MlpParams& mlp, Rng& rng);

/// Visits every parameter tensor in a fixed order.
void for_each_param(MlpParams& mlp, const std::function<void(std::vector<double>&)>& fn);
void for_each_param(const MlpParams& mlp, const std::function<void(const std::vector<double>&)>& fn);

/// Tape-resident copy of an MLP's parameters (leaves requiring grad when
/// `trainable`), in for_each_param order.
struct MlpOnTape {
    const MlpParams* params = nullptr;
    std::vector<Tape::Ref> leaves;
};

MlpOnTape mlp_to_tape(Tape& tape, const MlpParams& mlp, bool trainable);

/// Forward pass for a row-batch x (rows x input_width).
Tape::Ref mlp_forward(Tape& tape, const MlpOnTape& mlp, Tape::Ref x);

/// Convenience: single forward pass outside any training loop.
std::vector<double> mlp_eval(const MlpParams& mlp, const std::vector<double>& x, int rows);

// -- optimizer -----------------------------------------------------------

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;  // one slot per parameter tensor

    void ensure_shapes(const std::vector<std::vector<double>*>& params);
};

/// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, const std::vector<std::vector<double>*>& params,
               const std::vector<const std::vector<double>*>& grads);

/// eta * sum |w| over all weights and biases; subgradient handled by the
/// tape's abs (0 at 0).
double l1_penalty(const MlpParams& mlp, double eta);

}  // namespace fvlab
