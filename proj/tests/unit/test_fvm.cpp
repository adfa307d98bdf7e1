#include <algorithm>
#include <cmath>

#include "core/fvm.hpp"
#include "core/mesh.hpp"
#include "core/util.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace fvlab;

namespace {

Field random_field(const Mesh& mesh, Rng& rng, double dt, bool with_source = true) {
    Field f;
    f.alpha = 1.0;
    f.dt = dt;
    for (int p = 0; p < mesh.cell_count(); ++p) {
        f.T.push_back(rng.uniform(-1.0, 1.0));
        f.S.push_back(with_source ? rng.uniform(-1.0, 1.0) : 0.0);
    }
    return f;
}

double weighted_sum(const Mesh& mesh, const std::vector<double>& T) {
    double s = 0.0;
    for (int p = 0; p < mesh.cell_count(); ++p) s += mesh.cells[p].volume * T[p];
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("first-order step on the two-cell mesh") {
    Mesh mesh = build_two_cell_mesh();
    Field f{{0.0, 1.0}, {0.0, 0.0}, 1.0, 0.1};
    Field next = step_first_order(mesh, f);
    CHECK(next.T[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(next.T[1] == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(next.S == f.S);

    SUBCASE("uniform state is a fixed point") {
        Field u{{0.4, 0.4}, {0.0, 0.0}, 1.0, 0.1};
        Field out = step_first_order(mesh, u);
        CHECK(out.T[0] == 0.4);
        CHECK(out.T[1] == 0.4);
    }
    SUBCASE("cell swap symmetry") {
        Field swapped{{1.0, 0.0}, {0.0, 0.0}, 1.0, 0.1};
        Field out = step_first_order(mesh, swapped);
        CHECK(out.T[0] == next.T[1]);
        CHECK(out.T[1] == next.T[0]);
    }
    SUBCASE("size mismatch rejected") {
        Field bad{{0.0}, {0.0}, 1.0, 0.1};
        CHECK_THROWS_AS(step_first_order(mesh, bad), Error);
    }
}

TEST_CASE("first-order conserves the volume-weighted total") {
    Rng rng(11);
    for (int n : {3, 6}) {
        Mesh mesh = generate_regular_mesh(n);
        Field f = random_field(mesh, rng, 0.5 * mesh.fourier_dt_max(1.0), false);
        double before = weighted_sum(mesh, f.T);
        Field next = step_first_order(mesh, f);
        double after = weighted_sum(mesh, next.T);
        CHECK(std::abs(after - before) <= 1e-12 * std::max(1.0, std::abs(before)));

        Field mid = step_midpoint(mesh, f);
        CHECK(std::abs(weighted_sum(mesh, mid.T) - before) <=
              1e-12 * std::max(1.0, std::abs(before)));
    }
}

TEST_CASE("two-hop step") {
    SUBCASE("falls back to first order when N2 is empty") {
        Mesh mesh = build_two_cell_mesh();
        DualGraph g = mesh_to_dual(mesh, false);
        Field f{{0.2, 0.9}, {0.1, -0.3}, 1.0, 0.2};
        Field a = step_second_order_2hop(mesh, g, f);
        Field b = step_first_order(mesh, f);
        CHECK(a.T == b.T);
    }
    SUBCASE("matches term-by-term oracle") {
        Mesh mesh = generate_regular_mesh(8);
        DualGraph g = mesh_to_dual(mesh, false);
        Rng rng(3);
        Field f = random_field(mesh, rng, 0.25 * mesh.fourier_dt_max(1.0));
        Field got = step_second_order_2hop(mesh, g, f);
        auto want = oracles::naive_second_order_2hop(mesh, f);
        CHECK(max_abs_diff(got.T, want) < 1e-14);
    }
    SUBCASE("uniform state unchanged") {
        Mesh mesh = generate_regular_mesh(4);
        DualGraph g = mesh_to_dual(mesh, false);
        Field f{std::vector<double>(mesh.cell_count(), 0.7),
                std::vector<double>(mesh.cell_count(), 0.0), 1.0, 0.01};
        Field out = step_second_order_2hop(mesh, g, f);
        for (double v : out.T) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
    }
    SUBCASE("missing two-hop edges rejected") {
        Mesh mesh = generate_regular_mesh(4);
        DualGraph g = mesh_to_dual(mesh, false);
        g.two_hop.clear();
        Rng rng2(1);
        Field f = random_field(mesh, rng2, 0.01);
        CHECK_THROWS_AS(step_second_order_2hop(mesh, g, f), Error);
    }
}

TEST_CASE("midpoint step hand values on the two-cell mesh") {
    Mesh mesh = build_two_cell_mesh();
    Field f{{0.0, 1.0}, {0.0, 0.0}, 1.0, 0.1};
    Field next = step_midpoint(mesh, f);
    // Half step (0.05, 0.95), then T0' = 0 + 0.1*(0.95-0.05) = 0.09.
    CHECK(next.T[0] == doctest::Approx(0.09).epsilon(1e-14));
    CHECK(next.T[1] == doctest::Approx(0.91).epsilon(1e-14));
}

TEST_CASE("Crank-Nicolson") {
    Mesh mesh = generate_regular_mesh(4);
    Rng rng(5);

    SUBCASE("uniform state unchanged") {
        Field f{std::vector<double>(mesh.cell_count(), 0.3),
                std::vector<double>(mesh.cell_count(), 0.0), 1.0, 0.01};
        Field out = step_crank_nicolson(mesh, f);
        for (double v : out.T) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
    }
    SUBCASE("matches dense implicit-solve oracle, with boundaries") {
        std::vector<std::optional<double>> bc(mesh.boundary_faces.size());
        bc[0] = 0.8;
        bc[3] = -0.2;
        Mesh with_bc = mesh.with_dirichlet(bc);
        Field f = random_field(with_bc, rng, 0.5 * with_bc.fourier_dt_max(1.0));
        Field got = step_crank_nicolson(with_bc, f);
        auto want = oracles::dense_crank_nicolson(with_bc, f);
        CHECK(max_abs_diff(got.T, want) < 1e-11);
    }
    SUBCASE("dense system matrix is exactly symmetric") {
        Field f = random_field(mesh, rng, 0.01);
        auto A = oracles::dense_cn_matrix(mesh, f);
        for (std::size_t i = 0; i < A.size(); ++i)
            for (std::size_t j = 0; j < i; ++j) CHECK(A[i][j] == A[j][i]);
    }
    SUBCASE("agrees with first order to O(dt^2)") {
        Field f = random_field(mesh, rng, 1.0);
        double fourier = mesh.fourier_dt_max(1.0);
        double err_prev = 0.0;
        // Halving dt should shrink |CN - FE| by about 4x.
        for (int k = 0; k < 2; ++k) {
            f.dt = fourier * (k == 0 ? 0.1 : 0.05);
            Field cn = step_crank_nicolson(mesh, f);
            Field fe = step_first_order(mesh, f);
            double err = max_abs_diff(cn.T, fe.T);
            if (k == 1) {
                CHECK(err < err_prev / 3.0);
                CHECK(err_prev < 0.1);
            }
            err_prev = err;
        }
    }
}

TEST_CASE("all schemes match gather oracles on small meshes") {
    Rng rng(17);
    std::vector<Mesh> meshes;
    meshes.push_back(build_two_cell_mesh());
    meshes.push_back(generate_regular_mesh(2));
    meshes.push_back(generate_regular_mesh(3));
    for (auto& mesh : meshes) {
        if (mesh.cell_count() > 20) continue;
        // Activate a couple of Dirichlet faces to cover the boundary path.
        std::vector<std::optional<double>> bc(mesh.boundary_faces.size());
        bc[0] = rng.uniform(-1.0, 1.0);
        if (bc.size() > 2) bc[2] = rng.uniform(-1.0, 1.0);
        mesh = mesh.with_dirichlet(bc);

        Field f = random_field(mesh, rng, 0.3 * mesh.fourier_dt_max(1.0));
        CHECK(max_abs_diff(step_first_order(mesh, f).T, oracles::naive_first_order(mesh, f)) <
              1e-14);
        CHECK(max_abs_diff(step_midpoint(mesh, f).T, oracles::naive_midpoint(mesh, f)) < 1e-14);
        DualGraph g = mesh_to_dual(mesh, true);
        CHECK(max_abs_diff(step_second_order_2hop(mesh, g, f).T,
                           oracles::naive_second_order_2hop(mesh, f)) < 1e-14);
        CHECK(max_abs_diff(step_crank_nicolson(mesh, f).T,
                           oracles::dense_crank_nicolson(mesh, f)) < 1e-12);
    }
}

TEST_CASE("rollout") {
    Mesh mesh = generate_regular_mesh(8);
    Rng rng(23);
    double fourier = mesh.fourier_dt_max(1.0);

    SUBCASE("steps=1 equals a single step") {
        Field f = random_field(mesh, rng, 0.5 * fourier);
        auto states = rollout(mesh, f, SchemeKind::FirstOrder, 1);
        REQUIRE(states.size() == 1);
        CHECK(states[0].T == step_first_order(mesh, f).T);
    }
    SUBCASE("stable at 0.99x the Fourier bound, maximum principle holds") {
        Field f = random_field(mesh, rng, 0.99 * fourier, false);
        auto states = rollout(mesh, f, SchemeKind::FirstOrder, 50);
        const Field* prev = &f;
        for (const auto& state : states) {
            double lo = *std::min_element(prev->T.begin(), prev->T.end());
            double hi = *std::max_element(prev->T.begin(), prev->T.end());
            for (double v : state.T) {
                CHECK(v >= lo - 1e-12);
                CHECK(v <= hi + 1e-12);
            }
            prev = &state;
        }
    }
    SUBCASE("diverges at 1.5x the Fourier bound") {
        Field f = random_field(mesh, rng, 1.5 * fourier, false);
        auto states = rollout(mesh, f, SchemeKind::FirstOrder, 50);
        std::vector<double> peak;
        for (const auto& state : states) {
            double m = 0.0;
            for (double v : state.T) m = std::max(m, std::abs(v));
            peak.push_back(m);
        }
        for (std::size_t i = peak.size() - 10; i < peak.size(); ++i) CHECK(peak[i] > peak[i - 1]);
        CHECK(peak.back() > 1e3 * peak.front());
    }
}

TEST_CASE("pde residual") {
    Mesh mesh = generate_regular_mesh(4);
    Rng rng(31);

    SUBCASE("zero for a steady uniform state") {
        Field f{std::vector<double>(mesh.cell_count(), 0.2),
                std::vector<double>(mesh.cell_count(), 0.0), 1.0, 0.1};
        auto r = pde_residual(mesh, f, f);
        for (double v : r) CHECK(std::abs(v) < 1e-14);
    }
    SUBCASE("backward-Euler state has (near) zero residual") {
        std::vector<std::optional<double>> bc(mesh.boundary_faces.size());
        bc[1] = 0.5;
        Mesh with_bc = mesh.with_dirichlet(bc);
        Field f = random_field(with_bc, rng, 0.5 * with_bc.fourier_dt_max(1.0));
        Field after = f;
        after.T = oracles::dense_backward_euler(with_bc, f);
        auto r = pde_residual(with_bc, f, after);
        for (double v : r) CHECK(std::abs(v) < 1e-10);
    }
    SUBCASE("explicit-step residual scales linearly with dt") {
        Field f = random_field(mesh, rng, 0.25 * mesh.fourier_dt_max(1.0));
        auto median_abs = [&](const Field& before) {
            Field after = step_first_order(mesh, before);
            auto r = pde_residual(mesh, before, after);
            for (double& v : r) v = std::abs(v);
            std::sort(r.begin(), r.end());
            return r[r.size() / 2];
        };
        double m1 = median_abs(f);
        Field half = f;
        half.dt = 0.5 * f.dt;
        double m2 = median_abs(half);
        CHECK(m2 == doctest::Approx(0.5 * m1).epsilon(0.2));
    }
}

TEST_CASE("field JSON round trip") {
    Field f{{0.1, -0.2, 0.3}, {0.0, 1.0, -1.0}, 1.25, 0.0625};
    Field g = field_from_json(field_to_json(f));
    CHECK(g.T == f.T);
    CHECK(g.S == f.S);
    CHECK(g.alpha == f.alpha);
    CHECK(g.dt == f.dt);
}
