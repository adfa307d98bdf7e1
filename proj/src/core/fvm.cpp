#include "core/fvm.hpp"

#include <cmath>

#include "json.hpp"

namespace fvlab {

void Field::check(const Mesh& mesh) const {
    const auto n = static_cast<std::size_t>(mesh.cell_count());
    if (T.size() != n || S.size() != n)
        fail(ErrorCode::invalid_argument,
             strprintf("field sizes (T=%zu, S=%zu) do not match %zu cells", T.size(), S.size(), n));
    if (!(dt > 0.0)) fail(ErrorCode::invalid_argument, "dt must be positive");
    if (!(alpha > 0.0)) fail(ErrorCode::invalid_argument, "alpha must be positive");
}

SchemeKind scheme_from_string(const std::string& name) {
    if (name == "first-order") return SchemeKind::FirstOrder;
    if (name == "crank-nicolson") return SchemeKind::CrankNicolson;
    if (name == "second-order-2hop") return SchemeKind::SecondOrder2Hop;
    if (name == "midpoint") return SchemeKind::Midpoint;
    fail(ErrorCode::invalid_argument, "unknown scheme '" + name + "'");
}

std::string scheme_to_string(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::FirstOrder: return "first-order";
        case SchemeKind::CrankNicolson: return "crank-nicolson";
        case SchemeKind::SecondOrder2Hop: return "second-order-2hop";
        case SchemeKind::Midpoint: return "midpoint";
    }
    return "?";
}

bool scheme_is_explicit(SchemeKind kind) { return kind != SchemeKind::CrankNicolson; }

namespace {

// Net diffusive in-flow per cell, accumulated in face-index order: sum over
// faces of alpha (A/delta)(T_other - T_P), plus active Dirichlet terms.
std::vector<double> flux_sum(const Mesh& mesh, const std::vector<double>& T, double alpha) {
    std::vector<double> flux(T.size(), 0.0);
    for (const auto& f : mesh.interior_faces) {
        double g = alpha * f.area / f.delta * (T[f.neighbor] - T[f.owner]);
        flux[f.owner] += g;
        flux[f.neighbor] -= g;
    }
    for (const auto& f : mesh.boundary_faces)
        if (f.dirichlet) flux[f.owner] += alpha * f.area / f.delta * (*f.dirichlet - T[f.owner]);
    return flux;
}

}  // namespace

std::vector<double> fv_laplacian(const Mesh& mesh, const std::vector<double>& T) {
    auto lap = flux_sum(mesh, T, 1.0);
    for (int p = 0; p < mesh.cell_count(); ++p) lap[p] /= mesh.cells[p].volume;
    return lap;
}

Field step_first_order(const Mesh& mesh, const Field& field) {
    field.check(mesh);
    Field next = field;
    auto flux = flux_sum(mesh, field.T, field.alpha);
    for (int p = 0; p < mesh.cell_count(); ++p)
        next.T[p] = field.T[p] + field.dt / mesh.cells[p].volume * flux[p] + field.dt * field.S[p];
    return next;
}

Field step_second_order_2hop(const Mesh& mesh, const DualGraph& graph, const Field& field) {
    field.check(mesh);
    if (graph.node_count != mesh.cell_count())
        fail(ErrorCode::invalid_argument, "dual graph does not match mesh");
    if (graph.two_hop.empty() && mesh.cell_count() > 2)
        fail(ErrorCode::invalid_argument, "dual graph is missing two-hop edges");

    Field next = step_first_order(mesh, field);
    for (const auto& e : graph.two_hop) {
        next.T[e.receiver] += field.dt / mesh.cells[e.receiver].volume * 0.5 * field.alpha *
                              (field.T[e.sender] - field.T[e.receiver]);
    }
    return next;
}

Field step_midpoint(const Mesh& mesh, const Field& field) {
    field.check(mesh);
    Field half = field;
    auto flux = flux_sum(mesh, field.T, field.alpha);
    for (int p = 0; p < mesh.cell_count(); ++p)
        half.T[p] = field.T[p] + field.dt * field.S[p] +
                    0.5 * field.dt / mesh.cells[p].volume * flux[p];

    Field next = field;
    auto flux_half = flux_sum(mesh, half.T, field.alpha);
    for (int p = 0; p < mesh.cell_count(); ++p)
        next.T[p] = field.T[p] + field.dt * field.S[p] +
                    field.dt / mesh.cells[p].volume * flux_half[p];
    return next;
}

namespace {

// Symmetric CN system in V-scaled form:
//   [V_P + (dt/2) sum c_f] T'_P - (dt/2) sum c_f T'_N = rhs_P
// with c_f = alpha A/delta.
struct CnSystem {
    std::vector<double> diag;
    std::vector<double> rhs;

    std::vector<double> apply(const Mesh& mesh, double alpha, double dt,
                              const std::vector<double>& x) const {
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = diag[i] * x[i];
        for (const auto& f : mesh.interior_faces) {
            double c = 0.5 * dt * alpha * f.area / f.delta;
            y[f.owner] -= c * x[f.neighbor];
            y[f.neighbor] -= c * x[f.owner];
        }
        return y;
    }
};

CnSystem assemble_crank_nicolson(const Mesh& mesh, const Field& field) {
    const int n = mesh.cell_count();
    CnSystem sys;
    sys.diag.assign(n, 0.0);
    sys.rhs.assign(n, 0.0);
    for (int p = 0; p < n; ++p) sys.diag[p] = mesh.cells[p].volume;

    auto flux = flux_sum(mesh, field.T, field.alpha);
    for (const auto& f : mesh.interior_faces) {
        double c = field.alpha * f.area / f.delta;
        sys.diag[f.owner] += 0.5 * field.dt * c;
        sys.diag[f.neighbor] += 0.5 * field.dt * c;
    }
    for (const auto& f : mesh.boundary_faces) {
        if (!f.dirichlet) continue;
        double c = field.alpha * f.area / f.delta;
        sys.diag[f.owner] += 0.5 * field.dt * c;
        // T_b is constant over the step; half its flux moves to the rhs.
        sys.rhs[f.owner] += 0.5 * field.dt * c * (*f.dirichlet);
    }
    for (int p = 0; p < n; ++p) {
        sys.rhs[p] += mesh.cells[p].volume * (field.T[p] + field.dt * field.S[p]) +
                      0.5 * field.dt * flux[p];
    }
    return sys;
}

}  // namespace

Field step_crank_nicolson(const Mesh& mesh, const Field& field) {
    field.check(mesh);
    const int n = mesh.cell_count();
    CnSystem sys = assemble_crank_nicolson(mesh, field);

    std::vector<double> x = field.T;
    auto ax = sys.apply(mesh, field.alpha, field.dt, x);
    std::vector<double> r(n), z(n), p(n);
    for (int i = 0; i < n; ++i) r[i] = sys.rhs[i] - ax[i];
    double bnorm = 0.0;
    for (int i = 0; i < n; ++i) bnorm += sys.rhs[i] * sys.rhs[i];
    bnorm = std::sqrt(bnorm);
    const double tol = 1e-12 * (bnorm > 0.0 ? bnorm : 1.0);

    for (int i = 0; i < n; ++i) z[i] = r[i] / sys.diag[i];
    p = z;
    double rz = 0.0;
    for (int i = 0; i < n; ++i) rz += r[i] * z[i];

    const int max_iters = 10 * n;
    int it = 0;
    for (; it < max_iters; ++it) {
        double rnorm = 0.0;
        for (int i = 0; i < n; ++i) rnorm += r[i] * r[i];
        if (std::sqrt(rnorm) <= tol) break;

        auto ap = sys.apply(mesh, field.alpha, field.dt, p);
        double pap = 0.0;
        for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
        double step = rz / pap;
        for (int i = 0; i < n; ++i) {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for (int i = 0; i < n; ++i) z[i] = r[i] / sys.diag[i];
        double rz_next = 0.0;
        for (int i = 0; i < n; ++i) rz_next += r[i] * z[i];
        double beta = rz_next / rz;
        rz = rz_next;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (it >= max_iters)
        fail(ErrorCode::numeric,
             strprintf("Crank-Nicolson CG failed to converge in %d iterations", max_iters));

    Field next = field;
    next.T = std::move(x);
    return next;
}

Field step_scheme(const Mesh& mesh, const DualGraph* graph, SchemeKind kind, const Field& field) {
    switch (kind) {
        case SchemeKind::FirstOrder: return step_first_order(mesh, field);
        case SchemeKind::CrankNicolson: return step_crank_nicolson(mesh, field);
        case SchemeKind::Midpoint: return step_midpoint(mesh, field);
        case SchemeKind::SecondOrder2Hop: {
            if (!graph) fail(ErrorCode::invalid_argument, "second-order-2hop needs a dual graph");
            return step_second_order_2hop(mesh, *graph, field);
        }
    }
    fail(ErrorCode::internal, "unreachable scheme kind");
}

std::vector<Field> rollout(const Mesh& mesh, const Field& field, SchemeKind kind, int steps) {
    if (steps < 1) fail(ErrorCode::invalid_argument, "rollout needs steps >= 1");
    DualGraph graph;
    if (kind == SchemeKind::SecondOrder2Hop) graph = mesh_to_dual(mesh, true);

    std::vector<Field> states;
    states.reserve(steps);
    Field current = field;
    for (int s = 0; s < steps; ++s) {
        current = step_scheme(mesh, &graph, kind, current);
        for (double v : current.T)
            if (!std::isfinite(v))
                fail(ErrorCode::numeric, strprintf("rollout diverged at step %d", s + 1));
        states.push_back(current);
    }
    return states;
}

std::vector<double> pde_residual(const Mesh& mesh, const Field& before, const Field& after) {
    before.check(mesh);
    if (after.T.size() != before.T.size())
        fail(ErrorCode::invalid_argument, "before/after fields have different sizes");
    auto lap = fv_laplacian(mesh, after.T);
    std::vector<double> r(before.T.size());
    for (std::size_t p = 0; p < r.size(); ++p)
        r[p] = (after.T[p] - before.T[p]) / before.dt - before.S[p] - before.alpha * lap[p];
    return r;
}

std::string field_to_json(const Field& field) {
    std::string out = "{\"T\": [";
    for (std::size_t i = 0; i < field.T.size(); ++i) {
        if (i) out += ", ";
        out += format_g17(field.T[i]);
    }
    out += "], \"S\": [";
    for (std::size_t i = 0; i < field.S.size(); ++i) {
        if (i) out += ", ";
        out += format_g17(field.S[i]);
    }
    out += "], \"alpha\": " + format_g17(field.alpha) + ", \"dt\": " + format_g17(field.dt) + "}\n";
    return out;
}

Field field_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::parse, strprintf("field JSON parse error: %s", e.what()));
    }
    if (!doc.contains("T") || !doc.contains("S") || !doc.contains("alpha") || !doc.contains("dt"))
        fail(ErrorCode::parse, "field JSON needs T, S, alpha, dt");
    Field f;
    f.T = doc["T"].get<std::vector<double>>();
    f.S = doc["S"].get<std::vector<double>>();
    f.alpha = doc["alpha"].get<double>();
    f.dt = doc["dt"].get<double>();
    return f;
}

}  // namespace fvlab
