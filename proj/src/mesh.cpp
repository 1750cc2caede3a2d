#include "nsopt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace nsopt {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

double signed_area(Vec2 a, Vec2 b, Vec2 c) { return 0.5 * cross(b - a, c - a); }

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

// Rebuilds edge tables, boundary flags and per-cell edge ids from scratch.
// Edge ids are assigned in first-seen order over cells (deterministic).
void build_connectivity(Mesh& m) {
  m.edges.clear();
  m.edge_cells.clear();
  m.cell_edges.assign(m.cells.size(), {-1, -1, -1});
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(m.cells.size() * 2);
  for (int c = 0; c < m.n_cells(); ++c) {
    for (int k = 0; k < 3; ++k) {
      int a = m.cells[c][(k + 1) % 3];
      int b = m.cells[c][(k + 2) % 3];
      std::uint64_t key = edge_key(a, b);
      auto it = index.find(key);
      int e;
      if (it == index.end()) {
        e = m.n_edges();
        index.emplace(key, e);
        m.edges.push_back({std::min(a, b), std::max(a, b)});
        m.edge_cells.push_back({c, -1});
      } else {
        e = it->second;
        if (m.edge_cells[e][1] != -1)
          throw std::runtime_error("mesh: edge shared by more than two cells");
        m.edge_cells[e][1] = c;
      }
      m.cell_edges[c][k] = e;
    }
  }
  m.edge_on_boundary.assign(m.edges.size(), 0);
  for (int e = 0; e < m.n_edges(); ++e)
    m.edge_on_boundary[e] = (m.edge_cells[e][1] == -1) ? 1 : 0;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0.0;
  int n = static_cast<int>(poly.size());
  for (int i = 0; i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  double d1 = cross(b - a, p - a);
  double d2 = cross(c - b, p - b);
  double d3 = cross(a - c, p - c);
  return d1 > 1e-14 && d2 > 1e-14 && d3 > 1e-14;
}

}  // namespace

double Mesh::cell_area(int c) const {
  const auto& t = cells[c];
  return signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

double Mesh::total_area() const {
  double s = 0.0;
  for (int c = 0; c < n_cells(); ++c) s += cell_area(c);
  return s;
}

Mesh::Geometry Mesh::geometry(int c) const {
  Geometry g;
  g.cell_id = c;
  g.area = cell_area(c);
  g.h = 0.0;
  for (int k = 0; k < 3; ++k) {
    Vec2 p = vertices[cells[c][(k + 1) % 3]];
    Vec2 q = vertices[cells[c][(k + 2) % 3]];
    Vec2 d = q - p;
    double len = norm(d);
    g.edge_lengths[k] = len;
    g.h = std::max(g.h, len);
    // CCW traversal from p to q puts the outside on the right: rotate by -90°.
    g.unit_normals[k] = {d.y / len, -d.x / len};
  }
  return g;
}

double Mesh::min_angle() const {
  double best = 4.0;  // > pi
  for (int c = 0; c < n_cells(); ++c) {
    for (int k = 0; k < 3; ++k) {
      Vec2 a = vertices[cells[c][k]];
      Vec2 b = vertices[cells[c][(k + 1) % 3]];
      Vec2 d = vertices[cells[c][(k + 2) % 3]];
      Vec2 u = b - a, v = d - a;
      double ang = std::acos(std::clamp(dot(u, v) / (norm(u) * norm(v)), -1.0, 1.0));
      best = std::min(best, ang);
    }
  }
  return best;
}

Mesh build_initial(const std::vector<Vec2>& polygon) {
  int n = static_cast<int>(polygon.size());
  if (n < 3) throw std::invalid_argument("build_initial: need at least 3 vertices");
  double area = polygon_area(polygon);
  if (!(area > 1e-12)) throw std::invalid_argument("build_initial: degenerate polygon (zero area)");

  Mesh m;
  m.vertices = polygon;

  // Try the fan from vertex 0 (valid when star-shaped w.r.t. it).
  std::vector<std::array<int, 3>> fan;
  double covered = 0.0;
  bool ok = true;
  for (int i = 1; i + 1 < n; ++i) {
    double a = signed_area(polygon[0], polygon[i], polygon[i + 1]);
    if (a <= 1e-14) { ok = false; break; }
    covered += a;
    fan.push_back({0, i, i + 1});
  }
  if (ok && std::abs(covered - area) <= 1e-12 * std::max(1.0, area)) {
    m.cells = fan;
  } else {
    // Ear clipping on the remaining index cycle.
    std::vector<int> ring(n);
    for (int i = 0; i < n; ++i) ring[i] = i;
    while (ring.size() > 3) {
      bool clipped = false;
      for (size_t i = 0; i < ring.size(); ++i) {
        int ia = ring[(i + ring.size() - 1) % ring.size()];
        int ib = ring[i];
        int ic = ring[(i + 1) % ring.size()];
        Vec2 a = polygon[ia], b = polygon[ib], c = polygon[ic];
        if (signed_area(a, b, c) <= 1e-14) continue;
        bool empty = true;
        for (int j : ring) {
          if (j == ia || j == ib || j == ic) continue;
          if (point_in_triangle(polygon[j], a, b, c)) { empty = false; break; }
        }
        if (!empty) continue;
        m.cells.push_back({ia, ib, ic});
        ring.erase(ring.begin() + static_cast<long>(i));
        clipped = true;
        break;
      }
      if (!clipped) throw std::invalid_argument("build_initial: polygon not simple");
    }
    m.cells.push_back({ring[0], ring[1], ring[2]});
  }

  build_connectivity(m);
  m.generation.assign(m.cells.size(), 0);
  m.cell_uid.resize(m.cells.size());
  m.parent_uid.assign(m.cells.size(), -1);
  m.ancestor.resize(m.cells.size());
  for (int c = 0; c < m.n_cells(); ++c) {
    m.cell_uid[c] = c;
    m.ancestor[c] = c;
  }
  m.next_uid = m.n_cells();
  return m;
}

namespace {

// Mutable scratch structures for longest-edge bisection.
struct WorkCell {
  std::array<int, 3> v;
  std::int64_t uid;
  std::int64_t parent;
  int gen;
  int root;  // cell index in the input mesh
  bool alive;
};

struct EdgeRec {
  int index;          // global edge index used for tie-breaking
  std::array<int, 2> cells{-1, -1};  // alive adjacent work cells
};

struct Refiner {
  std::vector<Vec2> verts;
  std::vector<WorkCell> cells;
  std::unordered_map<std::uint64_t, EdgeRec> edges;
  std::unordered_map<std::uint64_t, int> midpoint;  // (a,b) -> vertex id
  int next_edge_index = 0;
  std::int64_t next_uid = 0;

  EdgeRec& edge(int a, int b) { return edges[edge_key(a, b)]; }

  void attach(int a, int b, int c) {
    EdgeRec& r = edges.at(edge_key(a, b));
    if (r.cells[0] == -1) r.cells[0] = c;
    else if (r.cells[1] == -1) r.cells[1] = c;
    else throw std::runtime_error("refine: edge shared by three cells");
  }

  void detach(int a, int b, int c) {
    EdgeRec& r = edges[edge_key(a, b)];
    if (r.cells[0] == c) r.cells[0] = -1;
    else if (r.cells[1] == c) r.cells[1] = -1;
  }

  int ensure_edge(int a, int b) {
    auto it = edges.find(edge_key(a, b));
    if (it != edges.end()) return it->second.index;
    EdgeRec r;
    r.index = next_edge_index++;
    edges.emplace(edge_key(a, b), r);
    return r.index;
  }

  int neighbor(int a, int b, int self) const {
    auto it = edges.find(edge_key(a, b));
    if (it == edges.end()) return -1;
    for (int c : it->second.cells)
      if (c != -1 && c != self && cells[c].alive) return c;
    return -1;
  }

  // Longest edge of an alive cell; ties broken by smallest global edge index.
  // Returns local index k (edge opposite vertex k).
  int refinement_edge(int c) const {
    const auto& v = cells[c].v;
    int best = -1;
    double best_len = -1.0;
    int best_index = -1;
    for (int k = 0; k < 3; ++k) {
      int a = v[(k + 1) % 3], b = v[(k + 2) % 3];
      Vec2 d = verts[b] - verts[a];
      double len = dot(d, d);
      int idx = edges.at(edge_key(a, b)).index;
      if (len > best_len || (len == best_len && idx < best_index)) {
        best = k;
        best_len = len;
        best_index = idx;
      }
    }
    return best;
  }

  int midpoint_of(int a, int b) {
    std::uint64_t key = edge_key(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    // Fixed formula, evaluated once and shared, so refits are bit-exact.
    Vec2 mp = {(verts[a].x + verts[b].x) / 2.0, (verts[a].y + verts[b].y) / 2.0};
    int id = static_cast<int>(verts.size());
    verts.push_back(mp);
    midpoint.emplace(key, id);
    return id;
  }

  // Split cell c across its edge opposite local vertex k through midpoint mid.
  void split(int c, int k, int mid) {
    WorkCell t = cells[c];  // copy: push_back below may reallocate
    int vi = t.v[(k + 1) % 3], vj = t.v[(k + 2) % 3], vk = t.v[k];
    cells[c].alive = false;
    detach(vi, vj, c);
    detach(vj, vk, c);
    detach(vk, vi, c);
    ensure_edge(vi, mid);
    ensure_edge(mid, vj);
    ensure_edge(mid, vk);
    int c1 = static_cast<int>(cells.size());
    cells.push_back({{vi, mid, vk}, next_uid++, t.uid, t.gen + 1, t.root, true});
    int c2 = static_cast<int>(cells.size());
    cells.push_back({{mid, vj, vk}, next_uid++, t.uid, t.gen + 1, t.root, true});
    attach(vi, mid, c1);
    attach(mid, vk, c1);
    attach(vk, vi, c1);
    attach(mid, vj, c2);
    attach(vj, vk, c2);
    attach(mid, vk, c2);
  }

  // Rivara-style compatible bisection of cell c0.
  void bisect(int c0) {
    std::vector<int> stack{c0};
    int guard = 0;
    while (!stack.empty()) {
      if (++guard > 10000000) throw std::runtime_error("refine: closure did not terminate");
      int c = stack.back();
      if (!cells[c].alive) { stack.pop_back(); continue; }
      int k = refinement_edge(c);
      int a = cells[c].v[(k + 1) % 3], b = cells[c].v[(k + 2) % 3];
      int n = neighbor(a, b, c);
      if (n == -1) {
        int mid = midpoint_of(a, b);
        split(c, k, mid);
        stack.pop_back();
      } else {
        int kn = refinement_edge(n);
        int an = cells[n].v[(kn + 1) % 3], bn = cells[n].v[(kn + 2) % 3];
        if (edge_key(an, bn) == edge_key(a, b)) {
          int mid = midpoint_of(a, b);
          split(c, k, mid);
          split(n, kn, mid);
          stack.pop_back();
        } else {
          stack.push_back(n);
        }
      }
    }
  }
};

}  // namespace

Mesh refine(const Mesh& mesh, const std::vector<int>& marked) {
  for (int c : marked)
    if (c < 0 || c >= mesh.n_cells()) throw std::invalid_argument("refine: marked cell out of range");

  Refiner rf;
  rf.verts = mesh.vertices;
  rf.next_uid = mesh.next_uid;
  rf.cells.reserve(mesh.cells.size() * 2);
  for (int c = 0; c < mesh.n_cells(); ++c)
    rf.cells.push_back({mesh.cells[c], mesh.cell_uid[c], mesh.parent_uid[c],
                        mesh.generation[c], c, true});
  // Seed the edge registry with the mesh's deterministic edge enumeration.
  rf.next_edge_index = mesh.n_edges();
  for (int e = 0; e < mesh.n_edges(); ++e) {
    EdgeRec r;
    r.index = e;
    r.cells = mesh.edge_cells[e];
    rf.edges.emplace(edge_key(mesh.edges[e][0], mesh.edges[e][1]), r);
  }

  for (int c : marked)
    if (rf.cells[c].alive) rf.bisect(c);

  Mesh out;
  out.vertices = std::move(rf.verts);
  out.next_uid = rf.next_uid;
  for (const auto& wc : rf.cells) {
    if (!wc.alive) continue;
    out.cells.push_back(wc.v);
    out.generation.push_back(wc.gen);
    out.cell_uid.push_back(wc.uid);
    out.parent_uid.push_back(wc.parent);
    out.ancestor.push_back(wc.root);
  }
  build_connectivity(out);
  return out;
}

std::vector<InteriorEdge> interior_edges(const Mesh& mesh) {
  std::vector<InteriorEdge> out;
  for (int e = 0; e < mesh.n_edges(); ++e) {
    if (mesh.edge_on_boundary[e]) continue;
    int c0 = mesh.edge_cells[e][0], c1 = mesh.edge_cells[e][1];
    int lo = std::min(c0, c1), hi = std::max(c0, c1);
    // Outward normal of the lower cell on this edge points into the higher cell.
    InteriorEdge ie;
    ie.edge_id = e;
    ie.left_cell = lo;
    ie.right_cell = hi;
    auto g = mesh.geometry(lo);
    Vec2 n{0, 0};
    for (int k = 0; k < 3; ++k)
      if (mesh.cell_edges[lo][k] == e) n = g.unit_normals[k];
    ie.unit_normal = n;
    out.push_back(ie);
  }
  return out;
}

std::vector<int> patch(const Mesh& mesh, int c) {
  std::vector<int> out{c};
  for (int k = 0; k < 3; ++k) {
    int e = mesh.cell_edges[c][k];
    for (int n : mesh.edge_cells[e])
      if (n != -1 && n != c) out.push_back(n);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "vertices " << mesh.n_vertices() << " cells " << mesh.n_cells() << "\n";
  os.precision(17);
  for (const auto& v : mesh.vertices) os << v.x << " " << v.y << "\n";
  for (const auto& c : mesh.cells) os << c[0] << " " << c[1] << " " << c[2] << "\n";
}

Mesh read_mesh(std::istream& is) {
  std::string kw1, kw2;
  int nv = 0, nc = 0;
  is >> kw1 >> nv >> kw2 >> nc;
  if (kw1 != "vertices" || kw2 != "cells" || nv < 3 || nc < 1)
    throw std::invalid_argument("read_mesh: malformed header");
  Mesh m;
  m.vertices.resize(nv);
  for (auto& v : m.vertices) is >> v.x >> v.y;
  m.cells.resize(nc);
  for (auto& c : m.cells) is >> c[0] >> c[1] >> c[2];
  if (!is) throw std::invalid_argument("read_mesh: truncated file");
  build_connectivity(m);
  m.generation.assign(nc, 0);
  m.cell_uid.resize(nc);
  m.parent_uid.assign(nc, -1);
  m.ancestor.resize(nc);
  for (int c = 0; c < nc; ++c) {
    m.cell_uid[c] = c;
    m.ancestor[c] = c;
  }
  m.next_uid = nc;
  return m;
}

void write_mesh_file(const std::string& path, const Mesh& mesh) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_mesh_file: cannot open " + path);
  write_mesh(os, mesh);
}

Mesh unit_square_mesh() {
  return build_initial({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
}

Mesh lshape_mesh() {
  // Fan of 6 right triangles around the reentrant corner (0,0).
  return build_initial({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}});
}

}  // namespace nsopt
