#pragma once

// Independent oracles for scheme verification. Everything here gathers
// per-cell contributions by scanning the face lists per cell, or solves
// dense linear systems by Gaussian elimination, deliberately avoiding the
// scatter-based code paths used by the library.

#include <cmath>
#include <vector>

#include "core/fvm.hpp"
#include "core/mesh.hpp"

namespace oracles {

using fvlab::Field;
using fvlab::Mesh;

inline std::vector<double> dense_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
        std::swap(A[col], A[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < n; ++r) {
            double f = A[r][col] / A[col][col];
            for (int c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= A[r][c] * x[c];
        x[r] = s / A[r][r];
    }
    return x;
}

// Gather-style flux: for cell p, scan every face and pick up the ones
// touching p.
inline double gather_flux(const Mesh& mesh, const std::vector<double>& T, double alpha, int p) {
    double sum = 0.0;
    for (const auto& f : mesh.interior_faces) {
        if (f.owner == p) sum += alpha * f.area / f.delta * (T[f.neighbor] - T[p]);
        if (f.neighbor == p) sum += alpha * f.area / f.delta * (T[f.owner] - T[p]);
    }
    for (const auto& f : mesh.boundary_faces)
        if (f.owner == p && f.dirichlet) sum += alpha * f.area / f.delta * (*f.dirichlet - T[p]);
    return sum;
}

inline std::vector<double> naive_first_order(const Mesh& mesh, const Field& f) {
    std::vector<double> out(f.T.size());
    for (int p = 0; p < mesh.cell_count(); ++p)
        out[p] = f.T[p] + f.dt / mesh.cells[p].volume * gather_flux(mesh, f.T, f.alpha, p) +
                 f.dt * f.S[p];
    return out;
}

// Eq-22-style update evaluated term by term from a per-cell scan of the
// BFS two-hop sets.
inline std::vector<double> naive_second_order_2hop(const Mesh& mesh, const Field& f) {
    std::vector<std::vector<int>> adj(mesh.cell_count());
    for (const auto& face : mesh.interior_faces) {
        adj[face.owner].push_back(face.neighbor);
        adj[face.neighbor].push_back(face.owner);
    }
    auto is_adjacent = [&](int a, int b) {
        for (int x : adj[a])
            if (x == b) return true;
        return false;
    };
    std::vector<double> out = naive_first_order(mesh, f);
    for (int p = 0; p < mesh.cell_count(); ++p) {
        for (int q = 0; q < mesh.cell_count(); ++q) {
            if (q == p || is_adjacent(p, q)) continue;
            bool two_hop = false;
            for (int m : adj[p])
                if (is_adjacent(m, q)) two_hop = true;
            if (two_hop)
                out[p] += f.dt / mesh.cells[p].volume * 0.5 * f.alpha * (f.T[q] - f.T[p]);
        }
    }
    return out;
}

inline std::vector<double> naive_midpoint(const Mesh& mesh, const Field& f) {
    std::vector<double> half(f.T.size());
    for (int p = 0; p < mesh.cell_count(); ++p)
        half[p] = f.T[p] + f.dt * f.S[p] +
                  0.5 * f.dt / mesh.cells[p].volume * gather_flux(mesh, f.T, f.alpha, p);
    std::vector<double> out(f.T.size());
    for (int p = 0; p < mesh.cell_count(); ++p)
        out[p] = f.T[p] + f.dt * f.S[p] +
                 f.dt / mesh.cells[p].volume * gather_flux(mesh, half, f.alpha, p);
    return out;
}

// Dense Crank-Nicolson matrix in the V-scaled symmetric form.
inline std::vector<std::vector<double>> dense_cn_matrix(const Mesh& mesh, const Field& f) {
    const int n = mesh.cell_count();
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (int p = 0; p < n; ++p) A[p][p] = mesh.cells[p].volume;
    for (const auto& face : mesh.interior_faces) {
        double c = 0.5 * f.dt * f.alpha * face.area / face.delta;
        A[face.owner][face.owner] += c;
        A[face.neighbor][face.neighbor] += c;
        A[face.owner][face.neighbor] -= c;
        A[face.neighbor][face.owner] -= c;
    }
    for (const auto& face : mesh.boundary_faces)
        if (face.dirichlet)
            A[face.owner][face.owner] += 0.5 * f.dt * f.alpha * face.area / face.delta;
    return A;
}

// rhs_P = V_P (T_P + dt S_P) + (dt/2) [level-n flux] + (dt/2) c T_b on
// active Dirichlet faces (T_b is constant across the step).
inline std::vector<double> dense_crank_nicolson(const Mesh& mesh, const Field& f) {
    const int n = mesh.cell_count();
    auto A = dense_cn_matrix(mesh, f);
    std::vector<double> b(n);
    for (int p = 0; p < n; ++p)
        b[p] = mesh.cells[p].volume * (f.T[p] + f.dt * f.S[p]) +
               0.5 * f.dt * gather_flux(mesh, f.T, f.alpha, p);
    for (const auto& face : mesh.boundary_faces)
        if (face.dirichlet)
            b[face.owner] += 0.5 * f.dt * f.alpha * face.area / face.delta * (*face.dirichlet);
    return dense_solve(A, b);
}

inline std::vector<double> dense_backward_euler(const Mesh& mesh, const Field& f) {
    const int n = mesh.cell_count();
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    std::vector<double> b(n);
    for (int p = 0; p < n; ++p) {
        A[p][p] = mesh.cells[p].volume / f.dt;
        b[p] = mesh.cells[p].volume * (f.T[p] / f.dt + f.S[p]);
    }
    for (const auto& face : mesh.interior_faces) {
        double c = f.alpha * face.area / face.delta;
        A[face.owner][face.owner] += c;
        A[face.neighbor][face.neighbor] += c;
        A[face.owner][face.neighbor] -= c;
        A[face.neighbor][face.owner] -= c;
    }
    for (const auto& face : mesh.boundary_faces) {
        if (!face.dirichlet) continue;
        double c = f.alpha * face.area / face.delta;
        A[face.owner][face.owner] += c;
        b[face.owner] += c * (*face.dirichlet);
    }
    return dense_solve(A, b);
}

}  // namespace oracles
