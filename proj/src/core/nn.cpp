#include "core/nn.hpp"

#include <cmath>

namespace fvlab {

MlpVariant mlp_variant_from_string(const std::string& s) {
    if (s == "plain") return MlpVariant::Plain;
    if (s == "gated") return MlpVariant::Gated;
    fail(ErrorCode::invalid_argument, "unknown MLP variant '" + s + "'");
}

std::string mlp_variant_to_string(MlpVariant v) {
    return v == MlpVariant::Plain ? "plain" : "gated";
}

MlpParams make_mlp(MlpVariant variant, int in, int out, int m, int d) {
    if (m < 1) fail(ErrorCode::invalid_argument, "MLP needs at least one layer");
    if (m > 1 && d < 1) fail(ErrorCode::invalid_argument, "hidden width must be positive");
    MlpParams mlp;
    mlp.variant = variant;
    for (int l = 0; l < m; ++l) {
        MlpLayer layer;
        layer.in = l == 0 ? in : d;
        layer.out = l == m - 1 ? out : d;
        layer.w.assign(static_cast<std::size_t>(layer.in) * layer.out, 0.0);
        layer.b.assign(layer.out, 0.0);
        if (variant == MlpVariant::Gated) {
            layer.wr.assign(static_cast<std::size_t>(layer.in) * layer.out, 0.0);
            layer.br.assign(layer.out, 0.0);
            layer.wf.assign(static_cast<std::size_t>(layer.out) * layer.out, 0.0);
            layer.bf.assign(layer.out, 0.0);
        }
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

void init_mlp(MlpParams& mlp, Rng& rng) {
    for (auto& layer : mlp.layers) {
        double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& v : layer.w) v = rng.uniform(-bound, bound);
        for (double& v : layer.b) v = rng.uniform(-bound, bound);
        if (mlp.variant == MlpVariant::Gated) {
            for (double& v : layer.wr) v = rng.uniform(-bound, bound);
            for (double& v : layer.br) v = rng.uniform(-bound, bound);
            double fbound = 1.0 / std::sqrt(static_cast<double>(layer.out));
            for (double& v : layer.wf) v = rng.uniform(-fbound, fbound);
            for (double& v : layer.bf) v = rng.uniform(-fbound, fbound);
        }
    }
}

void for_each_param(MlpParams& mlp, const std::function<void(std::vector<double>&)>& fn) {
    for (auto& layer : mlp.layers) {
        fn(layer.w);
        fn(layer.b);
        if (mlp.variant == MlpVariant::Gated) {
            fn(layer.wr);
            fn(layer.br);
            fn(layer.wf);
            fn(layer.bf);
        }
    }
}

void for_each_param(const MlpParams& mlp,
                    const std::function<void(const std::vector<double>&)>& fn) {
    for_each_param(const_cast<MlpParams&>(mlp),
                   [&fn](std::vector<double>& v) { fn(const_cast<const std::vector<double>&>(v)); });
}

MlpOnTape mlp_to_tape(Tape& tape, const MlpParams& mlp, bool trainable) {
    MlpOnTape out;
    out.params = &mlp;
    for (const auto& layer : mlp.layers) {
        out.leaves.push_back(tape.input(layer.in, layer.out, layer.w, trainable));
        out.leaves.push_back(tape.input(1, layer.out, layer.b, trainable));
        if (mlp.variant == MlpVariant::Gated) {
            out.leaves.push_back(tape.input(layer.in, layer.out, layer.wr, trainable));
            out.leaves.push_back(tape.input(1, layer.out, layer.br, trainable));
            out.leaves.push_back(tape.input(layer.out, layer.out, layer.wf, trainable));
            out.leaves.push_back(tape.input(1, layer.out, layer.bf, trainable));
        }
    }
    return out;
}

Tape::Ref mlp_forward(Tape& tape, const MlpOnTape& mlp, Tape::Ref x) {
    const MlpParams& p = *mlp.params;
    const int per_layer = p.variant == MlpVariant::Gated ? 6 : 2;
    Tape::Ref h = x;
    for (int l = 0; l < p.layer_count(); ++l) {
        const auto* leaf = mlp.leaves.data() + static_cast<std::size_t>(l) * per_layer;
        if (p.variant == MlpVariant::Plain) {
            h = tape.add(tape.matmul(h, leaf[0]), leaf[1]);
            if (l + 1 < p.layer_count()) h = tape.relu(h);
        } else {
            Tape::Ref left = tape.gelu(tape.add(tape.matmul(h, leaf[0]), leaf[1]));
            Tape::Ref right = tape.add(tape.matmul(h, leaf[2]), leaf[3]);
            h = tape.add(tape.matmul(tape.mul(left, right), leaf[4]), leaf[5]);
        }
    }
    return h;
}

std::vector<double> mlp_eval(const MlpParams& mlp, const std::vector<double>& x, int rows) {
    Tape tape;
    auto on_tape = mlp_to_tape(tape, mlp, false);
    auto in = tape.constant(rows, mlp.input_width(), x);
    auto out = mlp_forward(tape, on_tape, in);
    return tape.value(out);
}

void AdamState::ensure_shapes(const std::vector<std::vector<double>*>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto* p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void adam_step(AdamState& state, const std::vector<std::vector<double>*>& params,
               const std::vector<const std::vector<double>*>& grads) {
    if (params.size() != grads.size())
        fail(ErrorCode::invalid_argument, "adam_step: params/grads mismatch");
    state.ensure_shapes(params);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = *params[t];
        const auto& g = *grads[t];
        if (p.size() != g.size()) fail(ErrorCode::invalid_argument, "adam_step: shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            state.m[t][i] = state.beta1 * state.m[t][i] + (1.0 - state.beta1) * g[i];
            state.v[t][i] = state.beta2 * state.v[t][i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = state.m[t][i] / bc1;
            double vhat = state.v[t][i] / bc2;
            p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

double l1_penalty(const MlpParams& mlp, double eta) {
    double total = 0.0;
    for_each_param(mlp, [&total](const std::vector<double>& v) {
        for (double x : v) total += std::abs(x);
    });
    return eta * total;
}

}  // namespace fvlab
