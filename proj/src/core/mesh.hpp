#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/util.hpp"

namespace fvlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a);

struct Cell {
    std::array<int, 3> verts{};  // CCW
    Vec2 centroid;
    double volume = 0.0;  // area in 2-D
};

struct InteriorFace {
    int owner = -1;     // cell P
    int neighbor = -1;  // cell N
    int v0 = -1, v1 = -1;
    double area = 0.0;   // edge length in 2-D
    double delta = 0.0;  // centroid distance |x_N - x_P|
};

struct BoundaryFace {
    int owner = -1;
    int v0 = -1, v1 = -1;
    double area = 0.0;
    double delta = 0.0;  // owner centroid to face midpoint
    std::optional<double> dirichlet;
};

/// Triangular mesh with the derived finite-volume quantities. Immutable
/// after construction; derived fields are always recomputed from
/// (vertices, cells), never deserialized.
class Mesh {
public:
    std::vector<Vec2> vertices;
    std::vector<Cell> cells;
    std::vector<InteriorFace> interior_faces;
    std::vector<BoundaryFace> boundary_faces;
    double domain_area = 0.0;  // from the boundary loop, not from cell sums

    int cell_count() const { return static_cast<int>(cells.size()); }

    /// Checks all structural invariants; throws Error(validation) on the
    /// first violation.
    void validate() const;

    /// Largest stable explicit timestep: min_P V_P / sum_f alpha*A_f/delta.
    /// Active Dirichlet faces are included in the sum.
    double fourier_dt_max(double alpha) const;

    Mesh with_dirichlet(const std::vector<std::optional<double>>& values) const;
};

/// Builds a mesh from raw vertices and CCW triangles; computes centroids,
/// volumes, faces and the domain area. `dirichlet` is indexed like the
/// resulting boundary_faces (empty = all inactive).
Mesh build_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> tris,
                const std::vector<std::optional<double>>& dirichlet = {});

/// Two equilateral triangles of side 2 sharing one face. V_i = sqrt(3),
/// A_f = 2, delta_12 = 2/sqrt(3), so (1/V)(A/delta) = 1.
Mesh build_two_cell_mesh();

/// Unit square, n x n squares each split along alternating diagonals.
Mesh generate_regular_mesh(int n);

struct IrregularMeshOptions {
    double attraction_radius = 0.25;  // r in the size field
    double contrast = 0.2;            // beta: h_min/h_max at an attraction point
    int smoothing_rounds = 3;
    int max_refine_rounds = 20;
};

/// Unit-square mesh refined toward two seeded attraction points, then
/// centroid-smoothed with the boundary pinned. Deterministic per seed.
Mesh generate_irregular_mesh(std::uint64_t seed, int target_cells,
                             const IrregularMeshOptions& opts = {});

// -- dual graph ---------------------------------------------------------

struct OneHopEdge {
    int sender = -1;  // -1 for boundary pseudo-edges
    int receiver = -1;
    int face = -1;  // interior_faces index, or boundary_faces index when boundary
    bool boundary = false;
};

struct TwoHopEdge {
    int sender = -1;    // Q
    int receiver = -1;  // P
    std::vector<int> via;  // intermediate cells, ascending
};

struct DualGraph {
    int node_count = 0;
    std::vector<OneHopEdge> one_hop;
    std::vector<TwoHopEdge> two_hop;
    int max_neighbors = 0;  // max 1-hop in-degree
};

/// Dual graph of a mesh: both directions of every interior face, plus a
/// pseudo-edge per active Dirichlet face when activate_boundary is set.
/// Two-hop edges connect cells at graph distance exactly 2 over interior
/// adjacency, with every intermediate cell recorded.
DualGraph mesh_to_dual(const Mesh& mesh, bool activate_boundary);

// -- serialization ------------------------------------------------------

/// JSON schema: {"vertices":[[x,y],..],"cells":[[i,j,k],..],
///               "boundary":[{"face":[i,j],"dirichlet":v|null},..]}.
/// Coordinates written with 17 significant digits; derived quantities
/// are recomputed on load.
void save_mesh(const Mesh& mesh, const std::string& path);
std::string mesh_to_json(const Mesh& mesh);
Mesh load_mesh(const std::string& path);
Mesh mesh_from_json(const std::string& text);

namespace detail {

struct TriSoup {
    std::vector<Vec2> verts;
    std::vector<std::array<int, 3>> tris;
};

/// Longest-edge bisection until every triangle satisfies the size field;
/// throws Error(numeric) after max_rounds sweeps.
void refine_to_size_field(TriSoup& soup, const std::vector<Vec2>& attractors, double h_max,
                          const IrregularMeshOptions& opts);

}  // namespace detail

}  // namespace fvlab
