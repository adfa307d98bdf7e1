#include "core/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fvlab {

double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

namespace {

double signed_area(Vec2 a, Vec2 b, Vec2 c) { return 0.5 * cross(b - a, c - a); }

double min_angle_deg(Vec2 a, Vec2 b, Vec2 c) {
    auto angle = [](Vec2 u, Vec2 v) {
        double d = dot(u, v) / (norm(u) * norm(v));
        d = std::clamp(d, -1.0, 1.0);
        return std::acos(d) * 180.0 / M_PI;
    };
    double aa = angle(b - a, c - a);
    double ab = angle(a - b, c - b);
    return std::min({aa, ab, 180.0 - aa - ab});
}

std::pair<int, int> sorted_edge(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

Mesh build_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> tris,
                const std::vector<std::optional<double>>& dirichlet) {
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    const int nv = static_cast<int>(mesh.vertices.size());

    mesh.cells.reserve(tris.size());
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const auto& tri = tris[t];
        for (int v : tri) {
            if (v < 0 || v >= nv)
                fail(ErrorCode::parse, strprintf("cells[%zu]: vertex index %d out of range", t, v));
        }
        Vec2 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
        Cell cell;
        cell.verts = tri;
        cell.centroid = (1.0 / 3.0) * (a + b + c);
        cell.volume = signed_area(a, b, c);
        mesh.cells.push_back(cell);
    }

    // Faces in first-encounter order over (cell, local edge) pairs so a
    // save/load round trip reproduces the ordering exactly.
    struct EdgeInfo {
        int first_cell = -1;
        int second_cell = -1;
        int v0 = -1, v1 = -1;  // as traversed by the first owner (CCW)
        int count = 0;
    };
    std::map<std::pair<int, int>, EdgeInfo> edges;
    std::vector<std::pair<int, int>> order;
    for (int t = 0; t < mesh.cell_count(); ++t) {
        const auto& tri = mesh.cells[t].verts;
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            auto key = sorted_edge(a, b);
            auto& info = edges[key];
            if (info.count == 0) {
                info.first_cell = t;
                info.v0 = a;
                info.v1 = b;
                order.push_back(key);
            } else {
                info.second_cell = t;
            }
            ++info.count;
        }
    }

    double boundary_loop_area = 0.0;
    for (const auto& key : order) {
        const auto& info = edges.at(key);
        if (info.count > 2)
            fail(ErrorCode::validation,
                 strprintf("edge (%d,%d) shared by %d cells", key.first, key.second, info.count));
        Vec2 pa = mesh.vertices[info.v0], pb = mesh.vertices[info.v1];
        double len = norm(pb - pa);
        if (info.count == 2) {
            InteriorFace f;
            f.owner = info.first_cell;
            f.neighbor = info.second_cell;
            f.v0 = info.v0;
            f.v1 = info.v1;
            f.area = len;
            f.delta = norm(mesh.cells[f.neighbor].centroid - mesh.cells[f.owner].centroid);
            mesh.interior_faces.push_back(f);
        } else {
            BoundaryFace f;
            f.owner = info.first_cell;
            f.v0 = info.v0;
            f.v1 = info.v1;
            f.area = len;
            Vec2 mid = 0.5 * (pa + pb);
            f.delta = norm(mid - mesh.cells[f.owner].centroid);
            mesh.boundary_faces.push_back(f);
            // Owner-CCW orientation makes the shoelace over boundary faces
            // the (positive) domain area.
            boundary_loop_area += 0.5 * cross(pa, pb);
        }
    }
    mesh.domain_area = boundary_loop_area;

    if (!dirichlet.empty()) {
        if (dirichlet.size() != mesh.boundary_faces.size())
            fail(ErrorCode::invalid_argument,
                 strprintf("dirichlet list has %zu entries for %zu boundary faces", dirichlet.size(),
                           mesh.boundary_faces.size()));
        for (std::size_t i = 0; i < dirichlet.size(); ++i)
            mesh.boundary_faces[i].dirichlet = dirichlet[i];
    }
    return mesh;
}

Mesh Mesh::with_dirichlet(const std::vector<std::optional<double>>& values) const {
    Mesh copy = *this;
    if (values.size() != copy.boundary_faces.size())
        fail(ErrorCode::invalid_argument, "dirichlet list size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) copy.boundary_faces[i].dirichlet = values[i];
    return copy;
}

void Mesh::validate() const {
    double vol_sum = 0.0;
    for (int t = 0; t < cell_count(); ++t) {
        const auto& c = cells[t];
        if (!(c.volume > 0.0))
            fail(ErrorCode::validation, strprintf("cell %d has non-positive volume %.3e", t, c.volume));
        Vec2 a = vertices[c.verts[0]], b = vertices[c.verts[1]], cc = vertices[c.verts[2]];
        double ang = min_angle_deg(a, b, cc);
        if (ang <= 1.0)
            fail(ErrorCode::validation, strprintf("cell %d min angle %.4f deg", t, ang));
        vol_sum += c.volume;
    }
    for (std::size_t i = 0; i < interior_faces.size(); ++i) {
        const auto& f = interior_faces[i];
        if (!(f.area > 0.0) || !(f.delta > 0.0))
            fail(ErrorCode::validation, strprintf("interior face %zu has A=%.3e delta=%.3e", i, f.area, f.delta));
        if (f.owner == f.neighbor)
            fail(ErrorCode::validation, strprintf("interior face %zu connects cell %d to itself", i, f.owner));
    }
    for (std::size_t i = 0; i < boundary_faces.size(); ++i) {
        const auto& f = boundary_faces[i];
        if (!(f.area > 0.0) || !(f.delta > 0.0))
            fail(ErrorCode::validation, strprintf("boundary face %zu has A=%.3e delta=%.3e", i, f.area, f.delta));
    }

    // Every undirected edge must be owned by exactly the cells that list it.
    std::map<std::pair<int, int>, int> counts;
    for (const auto& c : cells)
        for (int e = 0; e < 3; ++e)
            counts[sorted_edge(c.verts[e], c.verts[(e + 1) % 3])]++;
    std::size_t interior = 0, boundary = 0;
    for (const auto& [edge, n] : counts) {
        if (n == 2)
            ++interior;
        else if (n == 1)
            ++boundary;
        else
            fail(ErrorCode::validation,
                 strprintf("edge (%d,%d) referenced by %d cells", edge.first, edge.second, n));
    }
    if (interior != interior_faces.size() || boundary != boundary_faces.size())
        fail(ErrorCode::validation, "face lists inconsistent with cell connectivity");

    if (domain_area > 0.0) {
        double rel = std::abs(vol_sum - domain_area) / domain_area;
        if (rel > 1e-9)
            fail(ErrorCode::validation,
                 strprintf("cell volumes sum to %.17g but domain area is %.17g (rel %.3e)", vol_sum,
                           domain_area, rel));
    }
}

double Mesh::fourier_dt_max(double alpha) const {
    if (!(alpha > 0.0)) fail(ErrorCode::invalid_argument, "alpha must be positive");
    std::vector<double> coeff(cells.size(), 0.0);
    for (const auto& f : interior_faces) {
        double c = alpha * f.area / f.delta;
        coeff[f.owner] += c;
        coeff[f.neighbor] += c;
    }
    for (const auto& f : boundary_faces)
        if (f.dirichlet) coeff[f.owner] += alpha * f.area / f.delta;
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cell_count(); ++t)
        if (coeff[t] > 0.0) best = std::min(best, cells[t].volume / coeff[t]);
    return best;
}

Mesh build_two_cell_mesh() {
    const double s3 = std::sqrt(3.0);
    std::vector<Vec2> verts = {{0.0, 0.0}, {2.0, 0.0}, {1.0, s3}, {1.0, -s3}};
    std::vector<std::array<int, 3>> tris = {{0, 1, 2}, {0, 3, 1}};
    return build_mesh(std::move(verts), std::move(tris));
}

Mesh generate_regular_mesh(int n) {
    if (n < 2) fail(ErrorCode::invalid_argument, strprintf("regular mesh needs n >= 2, got %d", n));
    auto soup = [](int n) {
        detail::TriSoup s;
        const double h = 1.0 / n;
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) s.verts.push_back({i * h, j * h});
        auto v = [n](int i, int j) { return j * (n + 1) + i; };
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                int ll = v(i, j), lr = v(i + 1, j), ur = v(i + 1, j + 1), ul = v(i, j + 1);
                if ((i + j) % 2 == 0) {
                    s.tris.push_back({ll, lr, ur});
                    s.tris.push_back({ll, ur, ul});
                } else {
                    s.tris.push_back({ll, lr, ul});
                    s.tris.push_back({lr, ur, ul});
                }
            }
        }
        return s;
    }(n);
    return build_mesh(std::move(soup.verts), std::move(soup.tris));
}

namespace detail {

namespace {

double size_field(Vec2 p, const std::vector<Vec2>& attractors, double h_max,
                  const IrregularMeshOptions& opts) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& a : attractors) d = std::min(d, norm(p - a));
    return h_max * std::min(1.0, opts.contrast + d / opts.attraction_radius);
}

struct Bisector {
    TriSoup& soup;
    std::map<std::pair<int, int>, int> midpoints;

    int midpoint(int a, int b) {
        auto key = sorted_edge(a, b);
        auto it = midpoints.find(key);
        if (it != midpoints.end()) return it->second;
        Vec2 m = 0.5 * (soup.verts[a] + soup.verts[b]);
        int idx = static_cast<int>(soup.verts.size());
        soup.verts.push_back(m);
        midpoints.emplace(key, idx);
        return idx;
    }

    // Splits tri by the midpoints listed in `split` (sorted edge keys),
    // longest edge first, recursing into the children.
    void subdivide(std::array<int, 3> tri, const std::set<std::pair<int, int>>& split,
                   std::vector<std::array<int, 3>>& out) {
        int cut = -1;
        double best_len = -1.0;
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            if (!split.count(sorted_edge(a, b))) continue;
            double len = norm(soup.verts[b] - soup.verts[a]);
            if (len > best_len) {
                best_len = len;
                cut = e;
            }
        }
        if (cut < 0) {
            out.push_back(tri);
            return;
        }
        int a = tri[cut], b = tri[(cut + 1) % 3], c = tri[(cut + 2) % 3];
        int m = midpoint(a, b);
        subdivide({a, m, c}, split, out);
        subdivide({m, b, c}, split, out);
    }
};

}  // namespace

void refine_to_size_field(TriSoup& soup, const std::vector<Vec2>& attractors, double h_max,
                          const IrregularMeshOptions& opts) {
    Bisector bis{soup, {}};
    for (int round = 0;; ++round) {
        // Longest edges of triangles violating the size criterion.
        std::set<std::pair<int, int>> split;
        for (const auto& t : soup.tris) {
            Vec2 a = soup.verts[t[0]], b = soup.verts[t[1]], c = soup.verts[t[2]];
            Vec2 centroid = (1.0 / 3.0) * (a + b + c);
            double target = size_field(centroid, attractors, h_max, opts);
            int longest = 0;
            double len = -1.0;
            for (int e = 0; e < 3; ++e) {
                double l = norm(soup.verts[t[(e + 1) % 3]] - soup.verts[t[e]]);
                if (l > len) {
                    len = l;
                    longest = e;
                }
            }
            if (len > target) split.insert(sorted_edge(t[longest], t[(longest + 1) % 3]));
        }
        if (split.empty()) return;
        if (round >= opts.max_refine_rounds)
            fail(ErrorCode::numeric,
                 strprintf("mesh refinement did not converge in %d rounds (%zu cells, %zu edges pending)",
                           opts.max_refine_rounds, soup.tris.size(), split.size()));

        // Conformity closure: a triangle with any split edge also splits
        // its longest edge. Iterate to a fixpoint.
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& t : soup.tris) {
                bool touched = false;
                for (int e = 0; e < 3; ++e)
                    if (split.count(sorted_edge(t[e], t[(e + 1) % 3]))) touched = true;
                if (!touched) continue;
                int longest = 0;
                double len = -1.0;
                for (int e = 0; e < 3; ++e) {
                    double l = norm(soup.verts[t[(e + 1) % 3]] - soup.verts[t[e]]);
                    if (l > len) {
                        len = l;
                        longest = e;
                    }
                }
                auto key = sorted_edge(t[longest], t[(longest + 1) % 3]);
                if (!split.count(key)) {
                    split.insert(key);
                    grew = true;
                }
            }
        }

        std::vector<std::array<int, 3>> next;
        next.reserve(soup.tris.size() * 2);
        for (const auto& t : soup.tris) bis.subdivide(t, split, next);
        soup.tris = std::move(next);
    }
}

namespace {

bool on_unit_boundary(Vec2 p) {
    const double eps = 1e-12;
    return p.x < eps || p.x > 1.0 - eps || p.y < eps || p.y > 1.0 - eps;
}

void smooth(TriSoup& soup, int rounds) {
    for (int r = 0; r < rounds; ++r) {
        std::vector<std::set<int>> adj(soup.verts.size());
        for (const auto& t : soup.tris) {
            for (int e = 0; e < 3; ++e) {
                adj[t[e]].insert(t[(e + 1) % 3]);
                adj[t[e]].insert(t[(e + 2) % 3]);
            }
        }
        std::vector<std::vector<int>> incident(soup.verts.size());
        for (std::size_t ti = 0; ti < soup.tris.size(); ++ti)
            for (int v : soup.tris[ti]) incident[v].push_back(static_cast<int>(ti));

        for (std::size_t v = 0; v < soup.verts.size(); ++v) {
            if (on_unit_boundary(soup.verts[v]) || adj[v].empty()) continue;
            Vec2 avg{0.0, 0.0};
            for (int nb : adj[v]) avg = avg + soup.verts[nb];
            avg = (1.0 / adj[v].size()) * avg;
            Vec2 old = soup.verts[v];
            soup.verts[v] = avg;
            // Reject moves that would invert or squash an incident triangle.
            bool ok = true;
            for (int ti : incident[v]) {
                const auto& t = soup.tris[ti];
                Vec2 a = soup.verts[t[0]], b = soup.verts[t[1]], c = soup.verts[t[2]];
                if (signed_area(a, b, c) < 1e-12 || min_angle_deg(a, b, c) <= 2.0) ok = false;
            }
            if (!ok) soup.verts[v] = old;
        }
    }
}

}  // namespace

}  // namespace detail

Mesh generate_irregular_mesh(std::uint64_t seed, int target_cells, const IrregularMeshOptions& opts) {
    if (target_cells < 100 || target_cells > 600)
        fail(ErrorCode::invalid_argument,
             strprintf("target cell count %d outside [100, 600]", target_cells));

    Rng rng(seed);
    std::vector<Vec2> attractors;
    for (int i = 0; i < 2; ++i)
        attractors.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});

    auto run = [&](double h_max) {
        auto base = generate_regular_mesh(4);
        detail::TriSoup soup;
        soup.verts = base.vertices;
        for (const auto& c : base.cells) soup.tris.push_back(c.verts);
        detail::refine_to_size_field(soup, attractors, h_max, opts);
        detail::smooth(soup, opts.smoothing_rounds);
        return soup;
    };

    // Cell count decreases with h_max; bisect toward the target.
    double lo = 0.02, hi = 0.7;
    detail::TriSoup best;
    long best_gap = std::numeric_limits<long>::max();
    for (int it = 0; it < 16; ++it) {
        double mid = 0.5 * (lo + hi);
        auto soup = run(mid);
        long gap = std::labs(static_cast<long>(soup.tris.size()) - target_cells);
        if (gap < best_gap) {
            best_gap = gap;
            best = soup;
        }
        if (static_cast<int>(soup.tris.size()) > target_cells)
            lo = mid;
        else
            hi = mid;
    }
    if (best_gap > std::lround(0.3 * target_cells))
        fail(ErrorCode::numeric,
             strprintf("irregular generation missed target %d by %ld cells", target_cells, best_gap));

    Mesh mesh = build_mesh(std::move(best.verts), std::move(best.tris));
    mesh.validate();
    return mesh;
}

DualGraph mesh_to_dual(const Mesh& mesh, bool activate_boundary) {
    DualGraph g;
    g.node_count = mesh.cell_count();
    for (std::size_t f = 0; f < mesh.interior_faces.size(); ++f) {
        const auto& face = mesh.interior_faces[f];
        g.one_hop.push_back({face.neighbor, face.owner, static_cast<int>(f), false});
        g.one_hop.push_back({face.owner, face.neighbor, static_cast<int>(f), false});
    }
    if (activate_boundary) {
        for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
            const auto& face = mesh.boundary_faces[f];
            if (face.dirichlet) g.one_hop.push_back({-1, face.owner, static_cast<int>(f), true});
        }
    }

    std::vector<int> indeg(g.node_count, 0);
    for (const auto& e : g.one_hop) indeg[e.receiver]++;
    g.max_neighbors = indeg.empty() ? 0 : *std::max_element(indeg.begin(), indeg.end());

    std::vector<std::set<int>> adj(g.node_count);
    for (const auto& f : mesh.interior_faces) {
        adj[f.owner].insert(f.neighbor);
        adj[f.neighbor].insert(f.owner);
    }
    for (int p = 0; p < g.node_count; ++p) {
        std::map<int, std::vector<int>> via;  // sender -> intermediates
        for (int m : adj[p])
            for (int q : adj[m])
                if (q != p && !adj[p].count(q)) via[q].push_back(m);
        for (auto& [q, mids] : via) {
            std::sort(mids.begin(), mids.end());
            g.two_hop.push_back({q, p, std::move(mids)});
        }
    }
    return g;
}

std::string mesh_to_json(const Mesh& mesh) {
    std::ostringstream out;
    out << "{\n  \"vertices\": [";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        if (i) out << ", ";
        out << "[" << format_g17(mesh.vertices[i].x) << ", " << format_g17(mesh.vertices[i].y) << "]";
    }
    out << "],\n  \"cells\": [";
    for (std::size_t i = 0; i < mesh.cells.size(); ++i) {
        const auto& v = mesh.cells[i].verts;
        if (i) out << ", ";
        out << "[" << v[0] << ", " << v[1] << ", " << v[2] << "]";
    }
    out << "],\n  \"boundary\": [";
    for (std::size_t i = 0; i < mesh.boundary_faces.size(); ++i) {
        const auto& f = mesh.boundary_faces[i];
        if (i) out << ", ";
        out << "{\"face\": [" << f.v0 << ", " << f.v1 << "], \"dirichlet\": ";
        out << (f.dirichlet ? format_g17(*f.dirichlet) : std::string("null")) << "}";
    }
    out << "]\n}\n";
    return out.str();
}

void save_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
    out << mesh_to_json(mesh);
    if (!out) fail(ErrorCode::io, "write to " + path + " failed");
}

Mesh mesh_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1 + std::count(text.begin(), text.begin() + std::min(text.size(), e.byte), '\n');
        fail(ErrorCode::parse, strprintf("mesh JSON parse error at line %zu: %s", line, e.what()));
    }
    if (!doc.is_object()) fail(ErrorCode::parse, "mesh JSON root must be an object");
    for (const auto& [key, _] : doc.items())
        if (key != "vertices" && key != "cells" && key != "boundary")
            fail(ErrorCode::parse, "mesh JSON has unknown key '" + key + "'");
    if (!doc.contains("vertices") || !doc.contains("cells"))
        fail(ErrorCode::parse, "mesh JSON missing 'vertices' or 'cells'");

    std::vector<Vec2> verts;
    for (std::size_t i = 0; i < doc["vertices"].size(); ++i) {
        const auto& v = doc["vertices"][i];
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            fail(ErrorCode::parse, strprintf("vertices[%zu] must be [x, y]", i));
        verts.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    std::vector<std::array<int, 3>> tris;
    for (std::size_t i = 0; i < doc["cells"].size(); ++i) {
        const auto& c = doc["cells"][i];
        if (!c.is_array() || c.size() != 3)
            fail(ErrorCode::parse, strprintf("cells[%zu] must be a vertex triple", i));
        std::array<int, 3> tri{};
        for (int k = 0; k < 3; ++k) {
            if (!c[k].is_number_integer())
                fail(ErrorCode::parse, strprintf("cells[%zu][%d] must be an integer", i, k));
            tri[k] = c[k].get<int>();
            if (tri[k] < 0 || tri[k] >= static_cast<int>(verts.size()))
                fail(ErrorCode::parse,
                     strprintf("cells[%zu][%d]: index %d out of range", i, k, tri[k]));
        }
        tris.push_back(tri);
    }

    Mesh mesh = build_mesh(std::move(verts), std::move(tris));

    if (doc.contains("boundary")) {
        std::map<std::pair<int, int>, int> lookup;
        for (std::size_t i = 0; i < mesh.boundary_faces.size(); ++i)
            lookup[sorted_edge(mesh.boundary_faces[i].v0, mesh.boundary_faces[i].v1)] =
                static_cast<int>(i);
        std::set<int> seen;
        for (std::size_t i = 0; i < doc["boundary"].size(); ++i) {
            const auto& b = doc["boundary"][i];
            if (!b.is_object() || !b.contains("face") || !b.contains("dirichlet") ||
                !b["face"].is_array() || b["face"].size() != 2)
                fail(ErrorCode::parse, strprintf("boundary[%zu] must be {face:[i,j], dirichlet}", i));
            int a = b["face"][0].get<int>(), c = b["face"][1].get<int>();
            auto it = lookup.find(sorted_edge(a, c));
            if (it == lookup.end())
                fail(ErrorCode::parse,
                     strprintf("boundary[%zu].face (%d,%d) is not a boundary edge", i, a, c));
            if (!seen.insert(it->second).second)
                fail(ErrorCode::parse, strprintf("boundary[%zu].face (%d,%d) listed twice", i, a, c));
            if (b["dirichlet"].is_null())
                mesh.boundary_faces[it->second].dirichlet.reset();
            else if (b["dirichlet"].is_number())
                mesh.boundary_faces[it->second].dirichlet = b["dirichlet"].get<double>();
            else
                fail(ErrorCode::parse, strprintf("boundary[%zu].dirichlet must be number or null", i));
        }
    }

    mesh.validate();
    return mesh;
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return mesh_from_json(buf.str());
}

}  // namespace fvlab
