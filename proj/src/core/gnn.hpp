#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/fvm.hpp"
#include "core/mesh.hpp"
#include "core/nn.hpp"
#include "core/tape.hpp"

namespace fvlab {

/// Input encodings for the message-passing models.
///  - Simplified: node [T, dt*S, dt/V], edge alpha*(A/delta)*(T_s - T_r)
///  - Primitive:  node [T, S, dt, V],  edge [T_s, T_r, A, delta]
///  - TwoHop:     Primitive plus a 7-wide 2-hop edge vector
enum class FeatureScheme { Simplified, Primitive, TwoHop };

FeatureScheme feature_scheme_from_string(const std::string& s);
std::string feature_scheme_to_string(FeatureScheme s);

/// Affine map of stored values onto the model's working range [-1, 1].
struct Normalization {
    double t_train = 1.0;  // sampling range [0, t_train]

    double normalize(double v) const { return 2.0 * v / t_train - 1.0; }
    double denormalize(double v) const { return (v + 1.0) * t_train / 2.0; }
};

struct MpsModel {
    FeatureScheme scheme = FeatureScheme::Simplified;
    MlpVariant variant = MlpVariant::Plain;
    int layer_count = 1;  // L
    int mlp_layers = 2;   // m
    int width = 2;        // d
    struct LayerNets {
        MlpParams agg;
        MlpParams up;
    };
    std::vector<LayerNets> layers;
    std::optional<MlpParams> agg2;  // TwoHop only (L = 1)
    Normalization norm;
    std::uint64_t seed = 0;
};

/// Widths per scheme and layer index (the update net of layer >= 2 also
/// sees the running temperature estimate).
int node_feature_width(FeatureScheme scheme);
int agg_input_width(FeatureScheme scheme);
int up_input_width(FeatureScheme scheme, int layer_index);
constexpr int kTwoHopFeatureWidth = 7;

MpsModel make_model(FeatureScheme scheme, MlpVariant variant, int L, int m, int d,
                    std::uint64_t seed, bool initialize = true);

std::vector<std::vector<double>*> model_params(MpsModel& model);
int count_params(const MpsModel& model);
int count_nonzero_params(const MpsModel& model, double threshold);

/// Per-graph arrays consumed by the forward pass. Edge order follows
/// DualGraph::one_hop (interior pairs first, then boundary pseudo-edges).
struct GraphFeatures {
    int node_count = 0;
    int node_width = 0;
    std::vector<double> node_feats;
    std::vector<int> edge_senders;            // interior directed edges only
    std::vector<int> edge_receivers;          // all edges, interior then boundary
    std::vector<double> boundary_sender_temps;
    int edge_static_width = 0;
    std::vector<double> edge_static;          // all edges
    std::vector<int> twohop_receivers;
    std::vector<double> twohop_feats;
    double dt = 0.0;
    double alpha = 1.0;
};

/// Packs mesh + field into the chosen feature scheme. Temperatures and
/// sources are used as stored (datasets store model units).
GraphFeatures build_features(FeatureScheme scheme, const Mesh& mesh, const Field& field,
                             const DualGraph& graph);

struct ModelOnTape {
    const MpsModel* model = nullptr;
    std::vector<MlpOnTape> agg, up;
    MlpOnTape agg2;
    std::vector<Tape::Ref> leaves;  // all parameter leaves, model_params order
};

ModelOnTape model_to_tape(Tape& tape, const MpsModel& model, bool trainable);

/// Intermediate MLP inputs/outputs are exposed for probe harvesting.
struct ForwardTrace {
    Tape::Ref output;  // n x 1 next-temperature prediction
    std::vector<Tape::Ref> agg_inputs, agg_outputs;
    std::vector<Tape::Ref> up_inputs, up_outputs;
    Tape::Ref agg2_input, agg2_output;
};

ForwardTrace mps_forward(Tape& tape, const ModelOnTape& model, const GraphFeatures& features);

/// Plain-array forward for inference.
std::vector<double> mps_eval(const MpsModel& model, const GraphFeatures& features);

/// The constructive sparse solution: reproduces the first-order update
/// exactly with 2m(L+1)+4 non-zero parameters (Simplified features).
MpsModel construct_exact_fvm_weights(int L, int m, int d);

/// Checkpoint JSON (architecture, flat parameter arrays, normalization
/// constants, seed).
std::string model_to_json(const MpsModel& model);
MpsModel model_from_json(const std::string& text);
void save_model(const MpsModel& model, const std::string& path);
MpsModel load_model(const std::string& path);

}  // namespace fvlab
