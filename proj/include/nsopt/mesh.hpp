#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nsopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);

// Conforming simplicial 2D mesh. Immutable after construction; refine()
// returns a new mesh. Cells are CCW vertex triples. Edge k of cell c is the
// edge opposite local vertex k, i.e. between local vertices (k+1)%3,(k+2)%3.
struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> cells;
  std::vector<std::array<int, 2>> edges;       // vertex pairs, lower id first
  std::vector<std::array<int, 2>> edge_cells;  // adjacent cells (lower id first, -1 if boundary)
  std::vector<std::array<int, 3>> cell_edges;  // edge id opposite local vertex k
  std::vector<char> edge_on_boundary;
  std::vector<int> generation;          // refinement depth per cell
  std::vector<std::int64_t> cell_uid;   // unique id across the refinement history
  std::vector<std::int64_t> parent_uid; // -1 for initial cells
  std::vector<int> ancestor;            // index into the *previous* mesh's cells (self for initial)
  std::int64_t next_uid = 0;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }

  double cell_area(int c) const;
  double total_area() const;
  // Diameter h_T (longest edge), per-edge lengths and outward unit normals.
  struct Geometry {
    int cell_id;
    double h;
    double area;
    std::array<double, 3> edge_lengths;
    std::array<Vec2, 3> unit_normals;  // outward, normal k opposite vertex k
  };
  Geometry geometry(int c) const;
  double min_angle() const;
};

struct InteriorEdge {
  int edge_id;
  int left_cell;   // lower cell id
  int right_cell;  // higher cell id
  Vec2 unit_normal;  // points from left_cell into right_cell
};

// Coarse triangulation of a simple CCW polygon. Fans from vertex 0 when the
// polygon is star-shaped w.r.t. it (covers the unit square and the L-shape
// fan around the reentrant corner); otherwise ear clipping.
Mesh build_initial(const std::vector<Vec2>& polygon);

// Longest-edge bisection of all marked cells plus conformity closure.
// Longest-edge ties are broken by the smallest global edge index.
Mesh refine(const Mesh& mesh, const std::vector<int>& marked);

std::vector<InteriorEdge> interior_edges(const Mesh& mesh);

// Star N_T: cells sharing at least one edge with cell c, including c.
std::vector<int> patch(const Mesh& mesh, int c);

// Plain text format: "vertices N cells M", coordinate lines, index triples.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
void write_mesh_file(const std::string& path, const Mesh& mesh);

// Canned domains.
Mesh unit_square_mesh();
Mesh lshape_mesh();  // (-1,1)^2 \ [0,1)x(-1,0], 6-triangle fan around (0,0)

}  // namespace nsopt
