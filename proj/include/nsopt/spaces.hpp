#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "nsopt/mesh.hpp"
#include "nsopt/quadrature.hpp"

namespace nsopt {

enum class SpaceKind { P2Vector, P1Scalar, P2VectorControl };

// Scalar-node based DOF layout. P1: nodes = vertices. P2: nodes = vertices
// followed by edge midpoints (node id V + edge id). Vector spaces are blocked
// by component: dof(c, node) = c * n_scalar_nodes + node.
struct DofMap {
  SpaceKind kind;
  int n_scalar_nodes = 0;
  int n_components = 1;
  int n_dofs = 0;
  std::vector<std::array<int, 6>> cell_nodes;  // P1 uses entries 0..2
  std::vector<Vec2> node_coords;
  std::vector<char> node_on_boundary;
  std::vector<int> boundary_nodes;  // sorted scalar node ids on the boundary

  int local_size() const { return kind == SpaceKind::P1Scalar ? 3 : 6; }
  int dof(int comp, int node) const { return comp * n_scalar_nodes + node; }
};

DofMap make_dofmap(const Mesh& mesh, SpaceKind kind);

// Affine map of one cell: x = v0 + J * (xi, eta).
struct CellMap {
  Vec2 v0;
  double J[2][2];
  double Jinv[2][2];
  double det;  // = 2 * area
};
CellMap cell_map(const Mesh& mesh, int c);

// Local basis data at one reference point, mapped to a physical cell.
// Ordering: 0..2 vertex bases lambda_k(2 lambda_k - 1); 3+k the edge basis
// 4 lambda_{k+1} lambda_{k+2} on the edge opposite vertex k.
struct P2Basis {
  std::array<double, 6> val;
  std::array<Vec2, 6> grad;  // physical gradient
  std::array<double, 6> lap;  // physical Laplacian (constant per cell)
};
struct P1Basis {
  std::array<double, 3> val;
  std::array<Vec2, 3> grad;
};
P2Basis eval_p2(const CellMap& cm, const std::array<double, 3>& bary);
P1Basis eval_p1(const CellMap& cm, const std::array<double, 3>& bary);

// Reference-element tables (values and reference gradients) precomputed at
// the points of a rule; assembly maps gradients per cell.
struct RefPointP2 {
  std::array<double, 6> val;
  std::array<Vec2, 6> dref;
};
struct RefPointP1 {
  std::array<double, 3> val;
};
std::vector<RefPointP2> ref_table_p2(const QuadratureRule& rule);
std::vector<RefPointP1> ref_table_p1(const QuadratureRule& rule);

struct FEField {
  std::shared_ptr<const DofMap> map;
  Eigen::VectorXd coeffs;
};

FEField make_field(std::shared_ptr<const DofMap> map);

// Evaluation on one cell at a barycentric point.
double eval_scalar(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary);
Vec2 eval_scalar_grad(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary);
Eigen::Vector2d eval_vec(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary);
// Gradient convention: G(i,j) = d u_i / d x_j.
Eigen::Matrix2d eval_vec_grad(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary);
Eigen::Vector2d eval_vec_lap(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary);

using ScalarFn = std::function<double(Vec2)>;
using VecFn = std::function<Eigen::Vector2d(Vec2)>;
using MatFn = std::function<Eigen::Matrix2d(Vec2)>;

// Nodal (Lagrange) interpolation: vertex and edge-midpoint values.
FEField interpolate(std::shared_ptr<const DofMap> map, const ScalarFn& g);
FEField interpolate(std::shared_ptr<const DofMap> map, const VecFn& g);

// Elementwise L2 projection Pi_T g onto the local quadratic space, one
// coefficient set of 6 per component.
Eigen::Matrix<double, 6, Eigen::Dynamic> l2_project_elementwise(
    const Mesh& mesh, int cell, const std::function<Eigen::VectorXd(Vec2)>& g,
    int n_components, const QuadratureRule& rule);

// Norms by quadrature.
double l2_norm(const Mesh& mesh, const FEField& f, const QuadratureRule& rule);
double h1_seminorm(const Mesh& mesh, const FEField& f, const QuadratureRule& rule);
double l2_error_scalar(const Mesh& mesh, const FEField& f, const ScalarFn& exact,
                       const QuadratureRule& rule);
// L2 distance to `exact` minimized over additive constants (pressure errors
// are measured modulo constants; discrete pressures are mean-zero).
double l2_error_scalar_meanfree(const Mesh& mesh, const FEField& f, const ScalarFn& exact,
                                const QuadratureRule& rule);
double l2_error_vec(const Mesh& mesh, const FEField& f, const VecFn& exact,
                    const QuadratureRule& rule);
double h1_semi_error_vec(const Mesh& mesh, const FEField& f, const MatFn& exact_grad,
                         const QuadratureRule& rule);
// Integral of a P1 scalar field over the mesh.
double integral(const Mesh& mesh, const FEField& f);

Vec2 bary_to_xy(const Mesh& mesh, int cell, const std::array<double, 3>& bary);

}  // namespace nsopt
