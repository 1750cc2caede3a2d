#include "nsopt/spaces.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace nsopt {

DofMap make_dofmap(const Mesh& mesh, SpaceKind kind) {
  DofMap dm;
  dm.kind = kind;
  bool p2 = (kind != SpaceKind::P1Scalar);
  dm.n_components = p2 ? 2 : 1;
  dm.n_scalar_nodes = p2 ? mesh.n_vertices() + mesh.n_edges() : mesh.n_vertices();
  dm.n_dofs = dm.n_components * dm.n_scalar_nodes;

  dm.cell_nodes.resize(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    auto& cn = dm.cell_nodes[c];
    for (int k = 0; k < 3; ++k) cn[k] = mesh.cells[c][k];
    if (p2)
      for (int k = 0; k < 3; ++k) cn[3 + k] = mesh.n_vertices() + mesh.cell_edges[c][k];
    else
      cn[3] = cn[4] = cn[5] = -1;
  }

  dm.node_coords.resize(dm.n_scalar_nodes);
  dm.node_on_boundary.assign(dm.n_scalar_nodes, 0);
  for (int v = 0; v < mesh.n_vertices(); ++v) dm.node_coords[v] = mesh.vertices[v];
  for (int e = 0; e < mesh.n_edges(); ++e) {
    if (mesh.edge_on_boundary[e]) {
      dm.node_on_boundary[mesh.edges[e][0]] = 1;
      dm.node_on_boundary[mesh.edges[e][1]] = 1;
    }
    if (p2) {
      Vec2 a = mesh.vertices[mesh.edges[e][0]];
      Vec2 b = mesh.vertices[mesh.edges[e][1]];
      dm.node_coords[mesh.n_vertices() + e] = {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
      if (mesh.edge_on_boundary[e]) dm.node_on_boundary[mesh.n_vertices() + e] = 1;
    }
  }
  for (int n = 0; n < dm.n_scalar_nodes; ++n)
    if (dm.node_on_boundary[n]) dm.boundary_nodes.push_back(n);
  return dm;
}

CellMap cell_map(const Mesh& mesh, int c) {
  Vec2 a = mesh.vertices[mesh.cells[c][0]];
  Vec2 b = mesh.vertices[mesh.cells[c][1]];
  Vec2 d = mesh.vertices[mesh.cells[c][2]];
  CellMap cm;
  cm.v0 = a;
  cm.J[0][0] = b.x - a.x;
  cm.J[0][1] = d.x - a.x;
  cm.J[1][0] = b.y - a.y;
  cm.J[1][1] = d.y - a.y;
  cm.det = cm.J[0][0] * cm.J[1][1] - cm.J[0][1] * cm.J[1][0];
  cm.Jinv[0][0] = cm.J[1][1] / cm.det;
  cm.Jinv[0][1] = -cm.J[0][1] / cm.det;
  cm.Jinv[1][0] = -cm.J[1][0] / cm.det;
  cm.Jinv[1][1] = cm.J[0][0] / cm.det;
  return cm;
}

namespace {

// Reference data at a barycentric point: values, gradients w.r.t. (xi, eta)
// (lambda = (1-xi-eta, xi, eta)), and the constant reference Hessians.
struct RefData {
  std::array<double, 6> val;
  std::array<Vec2, 6> d;
};

RefData ref_p2(const std::array<double, 3>& l) {
  RefData r;
  const Vec2 dl[3] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
  for (int k = 0; k < 3; ++k) {
    r.val[k] = l[k] * (2.0 * l[k] - 1.0);
    r.d[k] = (4.0 * l[k] - 1.0) * dl[k];
  }
  for (int k = 0; k < 3; ++k) {
    int i = (k + 1) % 3, j = (k + 2) % 3;
    r.val[3 + k] = 4.0 * l[i] * l[j];
    r.d[3 + k] = 4.0 * (l[j] * dl[i] + l[i] * dl[j]);
  }
  return r;
}

// Constant reference Hessians (dxx, dxy, dyy) of the six P2 bases.
constexpr double kHess[6][3] = {
    {4.0, 4.0, 4.0},    // l0(2l0-1)
    {4.0, 0.0, 0.0},    // l1(2l1-1)
    {0.0, 0.0, 4.0},    // l2(2l2-1)
    {0.0, 4.0, 0.0},    // 4 l1 l2
    {0.0, -4.0, -8.0},  // 4 l2 l0
    {-8.0, -4.0, 0.0},  // 4 l0 l1
};

Vec2 map_grad(const CellMap& cm, Vec2 dref) {
  // grad_x = J^{-T} grad_ref
  return {cm.Jinv[0][0] * dref.x + cm.Jinv[1][0] * dref.y,
          cm.Jinv[0][1] * dref.x + cm.Jinv[1][1] * dref.y};
}

}  // namespace

P2Basis eval_p2(const CellMap& cm, const std::array<double, 3>& bary) {
  RefData r = ref_p2(bary);
  P2Basis b;
  b.val = r.val;
  for (int k = 0; k < 6; ++k) b.grad[k] = map_grad(cm, r.d[k]);
  // Physical Hessian: J^{-T} H J^{-1}; Laplacian = its trace.
  const double a = cm.Jinv[0][0], b01 = cm.Jinv[0][1], c = cm.Jinv[1][0], d = cm.Jinv[1][1];
  for (int k = 0; k < 6; ++k) {
    double hxx = kHess[k][0], hxy = kHess[k][1], hyy = kHess[k][2];
    // trace(J^{-T} H J^{-1}) = sum_{m} (J^{-1} row combinations)
    double t00 = a * (hxx * a + hxy * c) + c * (hxy * a + hyy * c);
    double t11 = b01 * (hxx * b01 + hxy * d) + d * (hxy * b01 + hyy * d);
    b.lap[k] = t00 + t11;
  }
  return b;
}

P1Basis eval_p1(const CellMap& cm, const std::array<double, 3>& bary) {
  P1Basis b;
  const Vec2 dl[3] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};
  for (int k = 0; k < 3; ++k) {
    b.val[k] = bary[k];
    b.grad[k] = map_grad(cm, dl[k]);
  }
  return b;
}

std::vector<RefPointP2> ref_table_p2(const QuadratureRule& rule) {
  std::vector<RefPointP2> t(rule.size());
  for (int q = 0; q < rule.size(); ++q) {
    RefData r = ref_p2(rule.points[q]);
    t[q].val = r.val;
    t[q].dref = r.d;
  }
  return t;
}

std::vector<RefPointP1> ref_table_p1(const QuadratureRule& rule) {
  std::vector<RefPointP1> t(rule.size());
  for (int q = 0; q < rule.size(); ++q)
    for (int k = 0; k < 3; ++k) t[q].val[k] = rule.points[q][k];
  return t;
}

FEField make_field(std::shared_ptr<const DofMap> map) {
  FEField f;
  f.coeffs = Eigen::VectorXd::Zero(map->n_dofs);
  f.map = std::move(map);
  return f;
}

Vec2 bary_to_xy(const Mesh& mesh, int cell, const std::array<double, 3>& bary) {
  Vec2 a = mesh.vertices[mesh.cells[cell][0]];
  Vec2 b = mesh.vertices[mesh.cells[cell][1]];
  Vec2 c = mesh.vertices[mesh.cells[cell][2]];
  return bary[0] * a + bary[1] * b + bary[2] * c;
}

double eval_scalar(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary) {
  (void)mesh;
  const DofMap& dm = *f.map;
  double s = 0.0;
  if (dm.kind == SpaceKind::P1Scalar) {
    for (int k = 0; k < 3; ++k) s += f.coeffs(dm.cell_nodes[cell][k]) * bary[k];
  } else {
    RefData r = ref_p2(bary);
    for (int k = 0; k < 6; ++k) s += f.coeffs(dm.cell_nodes[cell][k]) * r.val[k];
  }
  return s;
}

Vec2 eval_scalar_grad(const Mesh& mesh, const FEField& f, int cell, const std::array<double, 3>& bary) {
  const DofMap& dm = *f.map;
  CellMap cm = cell_map(mesh, cell);
  Vec2 g{0, 0};
  if (dm.kind == SpaceKind::P1Scalar) {
    P1Basis b = eval_p1(cm, bary);
    for (int k = 0; k < 3; ++k) g = g + f.coeffs(dm.cell_nodes[cell][k]) * b.grad[k];
  } else {
    P2Basis b = eval_p2(cm, bary);
    for (int k = 0; k < 6; ++k) g = g + f.coeffs(dm.cell_nodes[cell][k]) * b.grad[k];
  }
  return g;
}

Eigen::Vector2d eval_vec(const Mesh& mesh, const FEField& f, int cell,
                         const std::array<double, 3>& bary) {
  (void)mesh;
  const DofMap& dm = *f.map;
  RefData r = ref_p2(bary);
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int k = 0; k < 6; ++k) {
    int n = dm.cell_nodes[cell][k];
    v(0) += f.coeffs(dm.dof(0, n)) * r.val[k];
    v(1) += f.coeffs(dm.dof(1, n)) * r.val[k];
  }
  return v;
}

Eigen::Matrix2d eval_vec_grad(const Mesh& mesh, const FEField& f, int cell,
                              const std::array<double, 3>& bary) {
  const DofMap& dm = *f.map;
  CellMap cm = cell_map(mesh, cell);
  P2Basis b = eval_p2(cm, bary);
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  for (int k = 0; k < 6; ++k) {
    int n = dm.cell_nodes[cell][k];
    for (int c = 0; c < 2; ++c) {
      double w = f.coeffs(dm.dof(c, n));
      g(c, 0) += w * b.grad[k].x;
      g(c, 1) += w * b.grad[k].y;
    }
  }
  return g;
}

Eigen::Vector2d eval_vec_lap(const Mesh& mesh, const FEField& f, int cell,
                             const std::array<double, 3>& bary) {
  const DofMap& dm = *f.map;
  CellMap cm = cell_map(mesh, cell);
  P2Basis b = eval_p2(cm, bary);
  Eigen::Vector2d l = Eigen::Vector2d::Zero();
  for (int k = 0; k < 6; ++k) {
    int n = dm.cell_nodes[cell][k];
    l(0) += f.coeffs(dm.dof(0, n)) * b.lap[k];
    l(1) += f.coeffs(dm.dof(1, n)) * b.lap[k];
  }
  return l;
}

FEField interpolate(std::shared_ptr<const DofMap> map, const ScalarFn& g) {
  if (map->n_components != 1) throw std::invalid_argument("interpolate: scalar function on vector space");
  FEField f = make_field(map);
  for (int n = 0; n < map->n_scalar_nodes; ++n) f.coeffs(n) = g(map->node_coords[n]);
  return f;
}

FEField interpolate(std::shared_ptr<const DofMap> map, const VecFn& g) {
  if (map->n_components != 2) throw std::invalid_argument("interpolate: vector function on scalar space");
  FEField f = make_field(map);
  for (int n = 0; n < map->n_scalar_nodes; ++n) {
    Eigen::Vector2d v = g(map->node_coords[n]);
    f.coeffs(map->dof(0, n)) = v(0);
    f.coeffs(map->dof(1, n)) = v(1);
  }
  return f;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> l2_project_elementwise(
    const Mesh& mesh, int cell, const std::function<Eigen::VectorXd(Vec2)>& g,
    int n_components, const QuadratureRule& rule) {
  CellMap cm = cell_map(mesh, cell);
  if (!(cm.det > 1e-28)) throw std::invalid_argument("l2_project_elementwise: degenerate cell");
  Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, Eigen::Dynamic> rhs(6, n_components);
  rhs.setZero();
  for (int q = 0; q < rule.size(); ++q) {
    RefData r = ref_p2(rule.points[q]);
    double w = rule.weights[q] * cm.det;
    Vec2 x = bary_to_xy(mesh, cell, rule.points[q]);
    Eigen::VectorXd gv = g(x);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) M(i, j) += w * r.val[i] * r.val[j];
      for (int c = 0; c < n_components; ++c) rhs(i, c) += w * r.val[i] * gv(c);
    }
  }
  return M.ldlt().solve(rhs);
}

namespace {

template <typename PerCell>
double accumulate_cells(const Mesh& mesh, const QuadratureRule& rule, PerCell f) {
  double s = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    for (int q = 0; q < rule.size(); ++q) s += rule.weights[q] * cm.det * f(c, rule.points[q]);
  }
  return s;
}

}  // namespace

double l2_norm(const Mesh& mesh, const FEField& f, const QuadratureRule& rule) {
  bool vec = f.map->n_components == 2;
  double s = accumulate_cells(mesh, rule, [&](int c, const std::array<double, 3>& b) {
    if (vec) return eval_vec(mesh, f, c, b).squaredNorm();
    double v = eval_scalar(mesh, f, c, b);
    return v * v;
  });
  return std::sqrt(std::max(0.0, s));
}

double h1_seminorm(const Mesh& mesh, const FEField& f, const QuadratureRule& rule) {
  bool vec = f.map->n_components == 2;
  double s = accumulate_cells(mesh, rule, [&](int c, const std::array<double, 3>& b) {
    if (vec) return eval_vec_grad(mesh, f, c, b).squaredNorm();
    Vec2 g = eval_scalar_grad(mesh, f, c, b);
    return dot(g, g);
  });
  return std::sqrt(std::max(0.0, s));
}

double l2_error_scalar(const Mesh& mesh, const FEField& f, const ScalarFn& exact,
                       const QuadratureRule& rule) {
  double s = accumulate_cells(mesh, rule, [&](int c, const std::array<double, 3>& b) {
    double d = exact(bary_to_xy(mesh, c, b)) - eval_scalar(mesh, f, c, b);
    return d * d;
  });
  return std::sqrt(std::max(0.0, s));
}

double l2_error_scalar_meanfree(const Mesh& mesh, const FEField& f, const ScalarFn& exact,
                                const QuadratureRule& rule) {
  // Two passes: compute the mean offset first, then the centered norm.
  // (The one-pass variance shortcut s2 - s1^2/area cancels catastrophically
  // when the offset dominates the residual.)
  double s1 = 0.0, area = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      double d = exact(bary_to_xy(mesh, c, rule.points[q])) - eval_scalar(mesh, f, c, rule.points[q]);
      s1 += w * d;
      area += w;
    }
  }
  double mean = s1 / area;
  double s2 = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      double d = exact(bary_to_xy(mesh, c, rule.points[q])) - eval_scalar(mesh, f, c, rule.points[q]);
      s2 += w * (d - mean) * (d - mean);
    }
  }
  return std::sqrt(s2);
}

double l2_error_vec(const Mesh& mesh, const FEField& f, const VecFn& exact,
                    const QuadratureRule& rule) {
  double s = accumulate_cells(mesh, rule, [&](int c, const std::array<double, 3>& b) {
    return (exact(bary_to_xy(mesh, c, b)) - eval_vec(mesh, f, c, b)).squaredNorm();
  });
  return std::sqrt(std::max(0.0, s));
}

double h1_semi_error_vec(const Mesh& mesh, const FEField& f, const MatFn& exact_grad,
                         const QuadratureRule& rule) {
  double s = accumulate_cells(mesh, rule, [&](int c, const std::array<double, 3>& b) {
    return (exact_grad(bary_to_xy(mesh, c, b)) - eval_vec_grad(mesh, f, c, b)).squaredNorm();
  });
  return std::sqrt(std::max(0.0, s));
}

double integral(const Mesh& mesh, const FEField& f) {
  if (f.map->kind != SpaceKind::P1Scalar) throw std::invalid_argument("integral: P1 only");
  double s = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    double a = mesh.cell_area(c);
    for (int k = 0; k < 3; ++k) s += a / 3.0 * f.coeffs(f.map->cell_nodes[c][k]);
  }
  return s;
}

}  // namespace nsopt
