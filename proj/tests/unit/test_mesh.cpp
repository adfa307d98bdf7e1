#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "core/mesh.hpp"
#include "doctest.h"

using namespace fvlab;

namespace {

// Independent 2-hop oracle: adjacency + pairwise common-neighbor scan.
std::map<std::pair<int, int>, std::vector<int>> two_hop_bfs(const Mesh& mesh) {
    std::vector<std::set<int>> adj(mesh.cell_count());
    for (const auto& f : mesh.interior_faces) {
        adj[f.owner].insert(f.neighbor);
        adj[f.neighbor].insert(f.owner);
    }
    std::map<std::pair<int, int>, std::vector<int>> out;
    for (int p = 0; p < mesh.cell_count(); ++p) {
        for (int q = 0; q < mesh.cell_count(); ++q) {
            if (q == p || adj[p].count(q)) continue;
            std::vector<int> via;
            for (int m : adj[p])
                if (adj[m].count(q)) via.push_back(m);
            if (!via.empty()) out[{q, p}] = via;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("two-cell mesh geometry") {
    Mesh mesh = build_two_cell_mesh();
    mesh.validate();
    REQUIRE(mesh.cell_count() == 2);
    const double s3 = std::sqrt(3.0);
    CHECK(mesh.cells[0].volume == doctest::Approx(s3).epsilon(1e-14));
    CHECK(mesh.cells[1].volume == doctest::Approx(s3).epsilon(1e-14));
    REQUIRE(mesh.interior_faces.size() == 1);
    const auto& f = mesh.interior_faces[0];
    CHECK(f.area == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(f.delta == doctest::Approx(2.0 / s3).epsilon(1e-14));
    // The configuration that makes the geometric factor unity.
    CHECK((1.0 / mesh.cells[0].volume) * (f.area / f.delta) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mesh.boundary_faces.size() == 4);
    for (const auto& b : mesh.boundary_faces) {
        CHECK(b.area == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(b.delta == doctest::Approx(1.0 / s3).epsilon(1e-12));
        CHECK(!b.dirichlet);
    }
    CHECK(mesh.domain_area == doctest::Approx(2.0 * s3).epsilon(1e-14));
}

TEST_CASE("two-cell dual graph") {
    Mesh mesh = build_two_cell_mesh();
    DualGraph g = mesh_to_dual(mesh, false);
    CHECK(g.node_count == 2);
    CHECK(g.one_hop.size() == 2);
    CHECK(g.two_hop.empty());
    CHECK(g.max_neighbors == 1);
}

TEST_CASE("regular mesh counts and area") {
    Mesh m2 = generate_regular_mesh(2);
    m2.validate();
    CHECK(m2.cell_count() == 8);
    double area = 0.0;
    for (const auto& c : m2.cells) area += c.volume;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-12));

    Mesh m7 = generate_regular_mesh(7);
    m7.validate();
    CHECK(m7.cell_count() == 98);

    CHECK_THROWS_AS(generate_regular_mesh(1), Error);
}

TEST_CASE("regular mesh interior vertex degrees are 4 or 8") {
    Mesh mesh = generate_regular_mesh(10);
    mesh.validate();
    std::vector<std::set<int>> vadj(mesh.vertices.size());
    for (const auto& c : mesh.cells) {
        for (int e = 0; e < 3; ++e) {
            vadj[c.verts[e]].insert(c.verts[(e + 1) % 3]);
            vadj[c.verts[e]].insert(c.verts[(e + 2) % 3]);
        }
    }
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        const auto& p = mesh.vertices[v];
        bool interior = p.x > 1e-12 && p.x < 1 - 1e-12 && p.y > 1e-12 && p.y < 1 - 1e-12;
        if (interior) CHECK((vadj[v].size() == 4 || vadj[v].size() == 8));
    }
}

TEST_CASE("irregular mesh generation") {
    Mesh mesh = generate_irregular_mesh(1, 300);
    mesh.validate();
    CHECK(mesh.cell_count() >= 210);
    CHECK(mesh.cell_count() <= 390);
    double area = 0.0;
    for (const auto& c : mesh.cells) area += c.volume;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-9));

    SUBCASE("deterministic per seed") {
        Mesh again = generate_irregular_mesh(1, 300);
        CHECK(mesh_to_json(mesh) == mesh_to_json(again));
    }
    SUBCASE("graded cell sizes") {
        Mesh m2 = generate_irregular_mesh(2, 300);
        double vmin = 1e30, vmax = 0.0;
        for (const auto& c : m2.cells) {
            vmin = std::min(vmin, c.volume);
            vmax = std::max(vmax, c.volume);
        }
        CHECK(vmax / vmin > 3.0);
    }
    SUBCASE("target range enforced") {
        CHECK_THROWS_AS(generate_irregular_mesh(1, 50), Error);
        CHECK_THROWS_AS(generate_irregular_mesh(1, 800), Error);
    }
}

TEST_CASE("dual graph on regular mesh") {
    Mesh mesh = generate_regular_mesh(4);
    DualGraph g = mesh_to_dual(mesh, false);

    std::vector<int> indeg(g.node_count, 0);
    std::set<std::pair<int, int>> dir;
    for (const auto& e : g.one_hop) {
        indeg[e.receiver]++;
        dir.insert({e.sender, e.receiver});
    }
    // Symmetry over interior faces.
    for (const auto& e : g.one_hop) CHECK(dir.count({e.receiver, e.sender}) == 1);
    // Interior cells of a triangulation have all three faces shared.
    int full = 0;
    for (int d : indeg) {
        CHECK(d <= 3);
        if (d == 3) ++full;
    }
    CHECK(full > 0);

    std::map<int, std::set<int>> two_hop_sets;
    std::vector<std::set<int>> adj(g.node_count);
    for (const auto& f : mesh.interior_faces) {
        adj[f.owner].insert(f.neighbor);
        adj[f.neighbor].insert(f.owner);
    }
    for (const auto& e : g.two_hop) {
        two_hop_sets[e.receiver].insert(e.sender);
        CHECK(e.sender != e.receiver);
        CHECK(!adj[e.receiver].count(e.sender));
        CHECK(!e.via.empty());
    }
    for (const auto& [node, s] : two_hop_sets) CHECK(s.size() <= 6);
}

TEST_CASE("two-hop edges match BFS oracle on small meshes") {
    for (int n : {2, 3, 4, 5}) {
        Mesh mesh = generate_regular_mesh(n);
        if (mesh.cell_count() > 50) continue;
        auto oracle = two_hop_bfs(mesh);
        DualGraph g = mesh_to_dual(mesh, false);
        REQUIRE(g.two_hop.size() == oracle.size());
        for (const auto& e : g.two_hop) {
            auto it = oracle.find({e.sender, e.receiver});
            REQUIRE(it != oracle.end());
            CHECK(e.via == it->second);
        }
    }
}

TEST_CASE("mesh save/load round trip") {
    Mesh mesh = build_two_cell_mesh();
    std::vector<std::optional<double>> bc(4);
    bc[1] = 0.75;
    mesh = mesh.with_dirichlet(bc);

    const std::string path = "two_cell_roundtrip.json";
    save_mesh(mesh, path);
    Mesh loaded = load_mesh(path);
    std::remove(path.c_str());

    REQUIRE(loaded.cell_count() == mesh.cell_count());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK(loaded.vertices[i].x == mesh.vertices[i].x);
        CHECK(loaded.vertices[i].y == mesh.vertices[i].y);
    }
    for (int i = 0; i < mesh.cell_count(); ++i) {
        CHECK(loaded.cells[i].verts == mesh.cells[i].verts);
        CHECK(loaded.cells[i].volume == mesh.cells[i].volume);
        CHECK(loaded.cells[i].centroid.x == mesh.cells[i].centroid.x);
    }
    REQUIRE(loaded.boundary_faces.size() == mesh.boundary_faces.size());
    for (std::size_t i = 0; i < mesh.boundary_faces.size(); ++i) {
        CHECK(loaded.boundary_faces[i].dirichlet == mesh.boundary_faces[i].dirichlet);
        CHECK(loaded.boundary_faces[i].delta == mesh.boundary_faces[i].delta);
    }
    CHECK(loaded.domain_area == mesh.domain_area);
}

TEST_CASE("mesh load error paths") {
    SUBCASE("negative volume (clockwise cell)") {
        // Clockwise triangle -> negative signed area.
        const char* json = R"({"vertices": [[0,0],[1,0],[0,1]], "cells": [[0,2,1]], "boundary": []})";
        CHECK_THROWS_WITH_AS(mesh_from_json(json),
                             doctest::Contains("non-positive volume"), Error);
    }
    SUBCASE("vertex index out of range") {
        const char* json = R"({"vertices": [[0,0],[1,0],[0,1]], "cells": [[0,1,7]], "boundary": []})";
        try {
            mesh_from_json(json);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
            CHECK(std::string(e.what()).find("out of range") != std::string::npos);
        }
    }
    SUBCASE("malformed JSON names the line") {
        try {
            mesh_from_json("{\n  \"vertices\": [[0,0],\n");
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
            CHECK(std::string(e.what()).find("line") != std::string::npos);
        }
    }
    SUBCASE("unknown boundary face") {
        const char* json =
            R"({"vertices": [[0,0],[1,0],[0,1]], "cells": [[0,1,2]],
                "boundary": [{"face": [0, 0], "dirichlet": null}]})";
        CHECK_THROWS_AS(mesh_from_json(json), Error);
    }
}

TEST_CASE("fourier bound") {
    Mesh mesh = build_two_cell_mesh();
    CHECK(mesh.fourier_dt_max(1.0) == doctest::Approx(1.0).epsilon(1e-14));
    // Linear in 1/alpha.
    CHECK(mesh.fourier_dt_max(2.0) == doctest::Approx(0.5).epsilon(1e-14));

    // Active Dirichlet faces tighten the bound.
    std::vector<std::optional<double>> bc(4);
    bc[0] = 0.0;
    Mesh with_bc = mesh.with_dirichlet(bc);
    CHECK(with_bc.fourier_dt_max(1.0) < 1.0);

    Mesh reg = generate_regular_mesh(8);
    CHECK(reg.fourier_dt_max(1.0) > 0.0);
}

TEST_CASE("refinement failure reports diagnostics") {
    detail::TriSoup soup;
    Mesh base = generate_regular_mesh(2);
    soup.verts = base.vertices;
    for (const auto& c : base.cells) soup.tris.push_back(c.verts);
    IrregularMeshOptions opts;
    opts.max_refine_rounds = 2;
    // Size target far below what two rounds of bisection can reach.
    CHECK_THROWS_WITH_AS(detail::refine_to_size_field(soup, {{0.5, 0.5}}, 1e-3, opts),
                         doctest::Contains("did not converge"), Error);
}
