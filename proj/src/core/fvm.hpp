#pragma once

#include <string>
#include <vector>

#include "core/mesh.hpp"

namespace fvlab {

/// Per-cell state advanced by the schemes. S is held fixed across time.
struct Field {
    std::vector<double> T;
    std::vector<double> S;
    double alpha = 1.0;
    double dt = 0.0;

    void check(const Mesh& mesh) const;
};

enum class SchemeKind {
    FirstOrder,
    CrankNicolson,
    SecondOrder2Hop,
    Midpoint,
};

SchemeKind scheme_from_string(const std::string& name);
std::string scheme_to_string(SchemeKind kind);
bool scheme_is_explicit(SchemeKind kind);

/// Explicit first-order update:
///   T_P' = T_P + (dt/V_P) sum_f alpha (A/delta)(T_N - T_P) + dt S_P,
/// with active Dirichlet faces contributing alpha (A/delta_Pb)(T_b - T_P).
Field step_first_order(const Mesh& mesh, const Field& field);

/// First-order update plus (dt/V_P) sum_{Q in N2(P)} (1/2) alpha (T_Q - T_P).
/// The 2-hop term carries no geometric factor.
Field step_second_order_2hop(const Mesh& mesh, const DualGraph& graph, const Field& field);

/// Explicit midpoint: half step with half-weighted flux and full source,
/// then a full step with fluxes evaluated at the half state.
Field step_midpoint(const Mesh& mesh, const Field& field);

/// Crank-Nicolson with face fluxes averaged between time levels, solved by
/// Jacobi-preconditioned conjugate gradient to relative residual 1e-12.
Field step_crank_nicolson(const Mesh& mesh, const Field& field);

/// Dispatch over SchemeKind. The dual graph is only consulted for
/// SecondOrder2Hop and may be null otherwise.
Field step_scheme(const Mesh& mesh, const DualGraph* graph, SchemeKind kind, const Field& field);

/// Repeated stepping; throws Error(numeric) naming the step index if a
/// state stops being finite.
std::vector<Field> rollout(const Mesh& mesh, const Field& field, SchemeKind kind, int steps);

/// r_P = (T_after - T_before)/dt - S_P - alpha Lap(T_after)_P with the
/// discrete FV Laplacian including active Dirichlet faces.
std::vector<double> pde_residual(const Mesh& mesh, const Field& before, const Field& after);

/// (1/V_P)[sum_f (A/delta)(T_N - T_P) + sum_active (A/delta_Pb)(T_b - T_P)].
std::vector<double> fv_laplacian(const Mesh& mesh, const std::vector<double>& T);

/// Field JSON {"T":[...],"S":[...],"alpha":x,"dt":y}.
std::string field_to_json(const Field& field);
Field field_from_json(const std::string& text);

}  // namespace fvlab
