#include "core/gnn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fvlab {

FeatureScheme feature_scheme_from_string(const std::string& s) {
    if (s == "simplified") return FeatureScheme::Simplified;
    if (s == "primitive") return FeatureScheme::Primitive;
    if (s == "twohop") return FeatureScheme::TwoHop;
    fail(ErrorCode::invalid_argument, "unknown feature scheme '" + s + "'");
}

std::string feature_scheme_to_string(FeatureScheme s) {
    switch (s) {
        case FeatureScheme::Simplified: return "simplified";
        case FeatureScheme::Primitive: return "primitive";
        case FeatureScheme::TwoHop: return "twohop";
    }
    return "?";
}

int node_feature_width(FeatureScheme scheme) {
    return scheme == FeatureScheme::Simplified ? 3 : 4;
}

int agg_input_width(FeatureScheme scheme) {
    return scheme == FeatureScheme::Simplified ? 1 : 4;
}

int up_input_width(FeatureScheme scheme, int layer_index) {
    switch (scheme) {
        case FeatureScheme::Simplified: return 3;
        case FeatureScheme::Primitive: return layer_index == 0 ? 5 : 6;
        case FeatureScheme::TwoHop: return 6;
    }
    return 0;
}

MpsModel make_model(FeatureScheme scheme, MlpVariant variant, int L, int m, int d,
                    std::uint64_t seed, bool initialize) {
    if (L < 1 || m < 1) fail(ErrorCode::invalid_argument, "model needs L >= 1 and m >= 1");
    if (scheme == FeatureScheme::TwoHop && L != 1)
        fail(ErrorCode::invalid_argument, "the 2-hop variant is restricted to L = 1");
    MpsModel model;
    model.scheme = scheme;
    model.variant = variant;
    model.layer_count = L;
    model.mlp_layers = m;
    model.width = d;
    model.seed = seed;
    for (int l = 0; l < L; ++l) {
        MpsModel::LayerNets nets;
        nets.agg = make_mlp(variant, agg_input_width(scheme), 1, m, d);
        nets.up = make_mlp(variant, up_input_width(scheme, l), 1, m, d);
        model.layers.push_back(std::move(nets));
    }
    if (scheme == FeatureScheme::TwoHop)
        model.agg2 = make_mlp(variant, kTwoHopFeatureWidth, 1, m, d);
    if (initialize) {
        Rng rng(seed);
        for (auto& nets : model.layers) {
            init_mlp(nets.agg, rng);
            init_mlp(nets.up, rng);
        }
        if (model.agg2) init_mlp(*model.agg2, rng);
    }
    return model;
}

std::vector<std::vector<double>*> model_params(MpsModel& model) {
    std::vector<std::vector<double>*> out;
    auto collect = [&out](MlpParams& mlp) {
        for_each_param(mlp, [&out](std::vector<double>& v) { out.push_back(&v); });
    };
    for (auto& nets : model.layers) {
        collect(nets.agg);
        collect(nets.up);
    }
    if (model.agg2) collect(*model.agg2);
    return out;
}

int count_params(const MpsModel& model) {
    int n = 0;
    auto params = model_params(const_cast<MpsModel&>(model));
    for (const auto* p : params) n += static_cast<int>(p->size());
    return n;
}

int count_nonzero_params(const MpsModel& model, double threshold) {
    if (threshold < 0.0) fail(ErrorCode::invalid_argument, "threshold must be >= 0");
    int n = 0;
    auto params = model_params(const_cast<MpsModel&>(model));
    for (const auto* p : params)
        for (double v : *p)
            if (std::abs(v) > threshold) ++n;
    return n;
}

GraphFeatures build_features(FeatureScheme scheme, const Mesh& mesh, const Field& field,
                             const DualGraph& graph) {
    field.check(mesh);
    GraphFeatures f;
    f.node_count = graph.node_count;
    f.node_width = node_feature_width(scheme);
    f.dt = field.dt;
    f.alpha = field.alpha;

    f.node_feats.reserve(static_cast<std::size_t>(f.node_count) * f.node_width);
    for (int p = 0; p < f.node_count; ++p) {
        if (scheme == FeatureScheme::Simplified) {
            f.node_feats.push_back(field.T[p]);
            f.node_feats.push_back(field.dt * field.S[p]);
            f.node_feats.push_back(field.dt / mesh.cells[p].volume);
        } else {
            f.node_feats.push_back(field.T[p]);
            f.node_feats.push_back(field.S[p]);
            f.node_feats.push_back(field.dt);
            f.node_feats.push_back(mesh.cells[p].volume);
        }
    }

    f.edge_static_width = scheme == FeatureScheme::Simplified ? 1 : 2;
    for (const auto& e : graph.one_hop) {
        double area, delta, t_sender;
        if (e.boundary) {
            const auto& face = mesh.boundary_faces[e.face];
            area = face.area;
            delta = face.delta;
            t_sender = face.dirichlet.value();
            f.boundary_sender_temps.push_back(t_sender);
        } else {
            const auto& face = mesh.interior_faces[e.face];
            area = face.area;
            delta = face.delta;
            t_sender = field.T[e.sender];
            f.edge_senders.push_back(e.sender);
        }
        f.edge_receivers.push_back(e.receiver);
        if (scheme == FeatureScheme::Simplified) {
            f.edge_static.push_back(field.alpha * area / delta *
                                    (t_sender - field.T[e.receiver]));
        } else {
            f.edge_static.push_back(area);
            f.edge_static.push_back(delta);
        }
    }

    if (scheme == FeatureScheme::TwoHop) {
        // Geometric factors per interior face, for path averaging.
        std::vector<std::vector<std::pair<int, const InteriorFace*>>> faces_of(mesh.cell_count());
        for (const auto& face : mesh.interior_faces) {
            faces_of[face.owner].push_back({face.neighbor, &face});
            faces_of[face.neighbor].push_back({face.owner, &face});
        }
        auto face_between = [&](int a, int b) -> const InteriorFace* {
            for (const auto& [other, face] : faces_of[a])
                if (other == b) return face;
            fail(ErrorCode::internal, "two-hop path through non-adjacent cells");
        };
        for (const auto& e : graph.two_hop) {
            double g_rec = 0.0, g_send = 0.0, d_total = 0.0;
            for (int m : e.via) {
                const auto* f_pm = face_between(e.receiver, m);
                const auto* f_mq = face_between(m, e.sender);
                g_rec += f_pm->area / f_pm->delta;
                g_send += f_mq->area / f_mq->delta;
                d_total += f_pm->delta + f_mq->delta;
            }
            const double k = static_cast<double>(e.via.size());
            f.twohop_receivers.push_back(e.receiver);
            f.twohop_feats.push_back(field.T[e.sender]);
            f.twohop_feats.push_back(field.T[e.receiver]);
            f.twohop_feats.push_back(field.S[e.sender]);
            f.twohop_feats.push_back(g_rec / k);
            f.twohop_feats.push_back(g_send / k);
            f.twohop_feats.push_back(d_total / k);
            f.twohop_feats.push_back(k);
        }
    }
    return f;
}

ModelOnTape model_to_tape(Tape& tape, const MpsModel& model, bool trainable) {
    ModelOnTape out;
    out.model = &model;
    for (const auto& nets : model.layers) {
        out.agg.push_back(mlp_to_tape(tape, nets.agg, trainable));
        out.up.push_back(mlp_to_tape(tape, nets.up, trainable));
    }
    if (model.agg2) out.agg2 = mlp_to_tape(tape, *model.agg2, trainable);
    // Leaf order must match model_params: per layer agg then up, then agg2.
    for (std::size_t l = 0; l < out.agg.size(); ++l) {
        out.leaves.insert(out.leaves.end(), out.agg[l].leaves.begin(), out.agg[l].leaves.end());
        out.leaves.insert(out.leaves.end(), out.up[l].leaves.begin(), out.up[l].leaves.end());
    }
    if (model.agg2)
        out.leaves.insert(out.leaves.end(), out.agg2.leaves.begin(), out.agg2.leaves.end());
    return out;
}

ForwardTrace mps_forward(Tape& tape, const ModelOnTape& on_tape, const GraphFeatures& f) {
    const MpsModel& model = *on_tape.model;
    if (f.node_width != node_feature_width(model.scheme))
        fail(ErrorCode::invalid_argument, "feature width does not match model scheme");
    const int n = f.node_count;
    const int n_edges = static_cast<int>(f.edge_receivers.size());
    const int n_interior = static_cast<int>(f.edge_senders.size());
    const int n_boundary = static_cast<int>(f.boundary_sender_temps.size());
    if (n_interior + n_boundary != n_edges)
        fail(ErrorCode::invalid_argument, "edge arrays inconsistent");

    ForwardTrace trace;
    auto nf = tape.constant(n, f.node_width, f.node_feats);
    auto h = tape.slice_cols(nf, 0, 1);
    auto edge_static = tape.constant(n_edges, f.edge_static_width, f.edge_static);

    for (int l = 0; l < model.layer_count; ++l) {
        Tape::Ref agg_in;
        if (model.scheme == FeatureScheme::Simplified) {
            agg_in = edge_static;
        } else {
            Tape::Ref ts = tape.gather_rows(h, f.edge_senders);
            if (n_boundary > 0) {
                auto tb = tape.constant(n_boundary, 1, f.boundary_sender_temps);
                ts = tape.concat_rows({ts, tb});
            }
            Tape::Ref tr = tape.gather_rows(h, f.edge_receivers);
            agg_in = tape.concat_cols({ts, tr, edge_static});
        }
        auto msg = mlp_forward(tape, on_tape.agg[l], agg_in);
        auto ebar = tape.scatter_sum_rows(msg, f.edge_receivers, n);
        trace.agg_inputs.push_back(agg_in);
        trace.agg_outputs.push_back(msg);

        Tape::Ref up_in;
        if (model.scheme == FeatureScheme::Simplified) {
            auto v1 = tape.slice_cols(nf, 1, 2);
            auto v2 = tape.slice_cols(nf, 2, 3);
            up_in = tape.concat_cols({h, v1, tape.mul(v2, ebar)});
        } else if (model.scheme == FeatureScheme::Primitive) {
            up_in = l == 0 ? tape.concat_cols({nf, ebar}) : tape.concat_cols({nf, h, ebar});
        } else {
            const int n_two = static_cast<int>(f.twohop_receivers.size());
            auto two_in = tape.constant(n_two, kTwoHopFeatureWidth, f.twohop_feats);
            auto msg2 = mlp_forward(tape, on_tape.agg2, two_in);
            auto ebar2 = tape.scatter_sum_rows(msg2, f.twohop_receivers, n);
            trace.agg2_input = two_in;
            trace.agg2_output = msg2;
            up_in = tape.concat_cols({nf, ebar, ebar2});
        }
        h = mlp_forward(tape, on_tape.up[l], up_in);
        trace.up_inputs.push_back(up_in);
        trace.up_outputs.push_back(h);
    }
    trace.output = h;
    return trace;
}

std::vector<double> mps_eval(const MpsModel& model, const GraphFeatures& features) {
    Tape tape;
    auto on_tape = model_to_tape(tape, model, false);
    auto trace = mps_forward(tape, on_tape, features);
    return tape.value(trace.output);
}

MpsModel construct_exact_fvm_weights(int L, int m, int d) {
    if (L < 1) fail(ErrorCode::invalid_argument, "construction needs L >= 1");
    if (m < 2) fail(ErrorCode::invalid_argument, "construction needs m >= 2");
    if (d < 2) fail(ErrorCode::invalid_argument, "identity pairs need width d >= 2");

    MpsModel model = make_model(FeatureScheme::Simplified, MlpVariant::Plain, L, m, d,
                                /*seed=*/0, /*initialize=*/false);

    // +1/-1 identity pair threaded through ReLU layers: lanes 0 and 1
    // carry max(x,0) and max(-x,0); the last layer recombines them.
    auto set = [](MlpLayer& layer, int row, int col, double v) {
        layer.w[static_cast<std::size_t>(row) * layer.out + col] = v;
    };
    auto identity_chain = [&](MlpParams& mlp, int input_row) {
        set(mlp.layers[0], input_row, 0, 1.0);
        set(mlp.layers[0], input_row, 1, -1.0);
        for (int p = 1; p + 1 < mlp.layer_count(); ++p) {
            set(mlp.layers[p], 0, 0, 1.0);
            set(mlp.layers[p], 1, 1, 1.0);
        }
        set(mlp.layers[mlp.layer_count() - 1], 0, 0, 1.0);
        set(mlp.layers[mlp.layer_count() - 1], 1, 0, -1.0);
    };

    // Layer 1: the aggregation net forwards beta, the update net sums its
    // three inputs.
    identity_chain(model.layers[0].agg, 0);
    auto& up0 = model.layers[0].up;
    for (int row = 0; row < 3; ++row) {
        set(up0.layers[0], row, 0, 1.0);
        set(up0.layers[0], row, 1, -1.0);
    }
    for (int p = 1; p + 1 < up0.layer_count(); ++p) {
        set(up0.layers[p], 0, 0, 1.0);
        set(up0.layers[p], 1, 1, 1.0);
    }
    set(up0.layers[up0.layer_count() - 1], 0, 0, 1.0);
    set(up0.layers[up0.layer_count() - 1], 1, 0, -1.0);

    // Layers 2..L: aggregation nets all zero, update nets forward the
    // running temperature estimate (input 0).
    for (int l = 1; l < L; ++l) identity_chain(model.layers[l].up, 0);

    return model;
}

// -- checkpoints ----------------------------------------------------------

namespace {

nlohmann::json mlp_params_to_json(const MlpParams& mlp) {
    nlohmann::json arrays = nlohmann::json::array();
    for_each_param(mlp, [&arrays](const std::vector<double>& v) { arrays.push_back(v); });
    return arrays;
}

void mlp_params_from_json(MlpParams& mlp, const nlohmann::json& arrays) {
    std::size_t i = 0;
    for_each_param(mlp, [&](std::vector<double>& v) {
        if (i >= arrays.size()) fail(ErrorCode::parse, "checkpoint has too few parameter arrays");
        auto loaded = arrays[i].get<std::vector<double>>();
        if (loaded.size() != v.size())
            fail(ErrorCode::parse, strprintf("checkpoint parameter array %zu has %zu values, want %zu",
                                             i, loaded.size(), v.size()));
        v = std::move(loaded);
        ++i;
    });
    if (i != arrays.size()) fail(ErrorCode::parse, "checkpoint has extra parameter arrays");
}

}  // namespace

std::string model_to_json(const MpsModel& model) {
    nlohmann::json doc;
    doc["architecture"] = {
        {"layers", model.layer_count},
        {"mlpLayers", model.mlp_layers},
        {"width", model.width},
        {"mlpVariant", mlp_variant_to_string(model.variant)},
        {"featureScheme", feature_scheme_to_string(model.scheme)},
        {"hasTwoHopAggregator", model.agg2.has_value()},
    };
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& nets : model.layers)
        layers.push_back({{"agg", mlp_params_to_json(nets.agg)}, {"up", mlp_params_to_json(nets.up)}});
    doc["parameters"] = {{"layers", layers}};
    if (model.agg2) doc["parameters"]["agg2"] = mlp_params_to_json(*model.agg2);
    doc["normalization"] = {{"tTrain", model.norm.t_train}};
    doc["seed"] = model.seed;
    return doc.dump(2) + "\n";
}

MpsModel model_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::parse, strprintf("checkpoint parse error: %s", e.what()));
    }
    for (const char* key : {"architecture", "parameters", "normalization", "seed"})
        if (!doc.contains(key)) fail(ErrorCode::parse, strprintf("checkpoint missing '%s'", key));

    const auto& arch = doc["architecture"];
    MpsModel model = make_model(feature_scheme_from_string(arch["featureScheme"].get<std::string>()),
                                mlp_variant_from_string(arch["mlpVariant"].get<std::string>()),
                                arch["layers"].get<int>(), arch["mlpLayers"].get<int>(),
                                arch["width"].get<int>(), doc["seed"].get<std::uint64_t>(),
                                /*initialize=*/false);
    if (arch["hasTwoHopAggregator"].get<bool>() != model.agg2.has_value())
        fail(ErrorCode::parse, "checkpoint twohop flag inconsistent with feature scheme");

    const auto& layers = doc["parameters"]["layers"];
    if (layers.size() != model.layers.size())
        fail(ErrorCode::parse, "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        mlp_params_from_json(model.layers[l].agg, layers[l]["agg"]);
        mlp_params_from_json(model.layers[l].up, layers[l]["up"]);
    }
    if (model.agg2) mlp_params_from_json(*model.agg2, doc["parameters"]["agg2"]);
    model.norm.t_train = doc["normalization"]["tTrain"].get<double>();
    return model;
}

void save_model(const MpsModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
    out << model_to_json(model);
}

MpsModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace fvlab
