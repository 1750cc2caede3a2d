#include "nsopt/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace nsopt {

namespace {

const QuadratureRule& cell_rule() {
  static const QuadratureRule r = make_rule(19);
  return r;
}
const LineRule& edge_rule() {
  static const LineRule r = make_line_rule(10);  // exact degree 19 on edges
  return r;
}

}  // namespace

double IndicatorField::total() const { return std::sqrt(std::max(0.0, values.sum())); }

std::array<double, 3> xy_to_bary(const Mesh& mesh, int cell, Vec2 x) {
  CellMap cm = cell_map(mesh, cell);
  Vec2 d = x - cm.v0;
  double xi = cm.Jinv[0][0] * d.x + cm.Jinv[0][1] * d.y;
  double eta = cm.Jinv[1][0] * d.x + cm.Jinv[1][1] * d.y;
  return {1.0 - xi - eta, xi, eta};
}

namespace {

// Flux (nu grad v - s I) n evaluated from one side of an edge.
Eigen::Vector2d side_flux(const Mesh& mesh, const FEField& v, const FEField& s, double nu,
                          int cell, Vec2 x, Vec2 n) {
  auto bary = xy_to_bary(mesh, cell, x);
  Eigen::Matrix2d g = eval_vec_grad(mesh, v, cell, bary);
  double sv = eval_scalar(mesh, s, cell, bary);
  Eigen::Vector2d nn(n.x, n.y);
  return nu * g * nn - sv * nn;
}

// Adds h_T * int_S |[[ (nu grad v - s I) n ]]|^2 of every interior edge to
// both adjacent cells of `acc`.
void accumulate_jumps(const FemSetup& fem, const FEField& v, const FEField& s, double nu,
                      Eigen::VectorXd& acc) {
  const Mesh& mesh = *fem.mesh;
  const LineRule& lr = edge_rule();
  for (const InteriorEdge& ie : interior_edges(mesh)) {
    Vec2 a = mesh.vertices[mesh.edges[ie.edge_id][0]];
    Vec2 b = mesh.vertices[mesh.edges[ie.edge_id][1]];
    double len = norm(b - a);
    double integral = 0.0;
    for (int q = 0; q < lr.size(); ++q) {
      Vec2 x = a + lr.points[q] * (b - a);
      Eigen::Vector2d jump =
          side_flux(mesh, v, s, nu, ie.left_cell, x, ie.unit_normal) -
          side_flux(mesh, v, s, nu, ie.right_cell, x, ie.unit_normal);
      integral += lr.weights[q] * len * jump.squaredNorm();
    }
    acc(ie.left_cell) += mesh.geometry(ie.left_cell).h * integral;
    acc(ie.right_cell) += mesh.geometry(ie.right_cell).h * integral;
  }
}

Eigen::Vector2d as_vec2(Vec2 v) { return {v.x, v.y}; }

}  // namespace

EstimatorParts est_state_parts(const FemSetup& fem, const FEField& y, const FEField& p,
                               const ProblemData& data, const ControlAt& control) {
  const Mesh& mesh = *fem.mesh;
  const QuadratureRule& rule = cell_rule();
  EstimatorParts parts;
  parts.volume = Eigen::VectorXd::Zero(mesh.n_cells());
  parts.divergence = Eigen::VectorXd::Zero(mesh.n_cells());
  parts.jump = Eigen::VectorXd::Zero(mesh.n_cells());

  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    double h = mesh.geometry(c).h;
    double vol = 0.0, div2 = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      const auto& bary = rule.points[q];
      Vec2 x = bary_to_xy(mesh, c, bary);
      Eigen::Vector2d yv = eval_vec(mesh, y, c, bary);
      Eigen::Matrix2d gy = eval_vec_grad(mesh, y, c, bary);
      Eigen::Vector2d lap = eval_vec_lap(mesh, y, c, bary);
      Vec2 gp = eval_scalar_grad(mesh, p, c, bary);
      Eigen::Vector2d res = control(c, bary) + data.nu * lap - gy * yv - as_vec2(gp);
      if (data.f) res += data.f(x);
      vol += w * res.squaredNorm();
      double div = gy(0, 0) + gy(1, 1);
      div2 += w * div * div;
    }
    parts.volume(c) = h * h * vol;
    parts.divergence(c) = div2;
  }
  accumulate_jumps(fem, y, p, data.nu, parts.jump);
  return parts;
}

IndicatorField est_state(const FemSetup& fem, const OptimalitySolution& sol,
                         const ProblemData& data) {
  ControlAt control;
  if (sol.scheme == Scheme::FullyDiscrete) {
    const FEField* u = &sol.u;
    const Mesh* mesh = fem.mesh;
    control = [mesh, u](int c, const std::array<double, 3>& b) { return eval_vec(*mesh, *u, c, b); };
  } else {
    const FEField* z = &sol.z;
    const Mesh* mesh = fem.mesh;
    const ProblemData* d = &data;
    control = [mesh, z, d](int c, const std::array<double, 3>& b) {
      return semi_control(*mesh, *z, *d, c, b);
    };
  }
  EstimatorParts parts = est_state_parts(fem, sol.y, sol.p, data, control);
  IndicatorField f;
  f.kind = sol.scheme == Scheme::FullyDiscrete ? IndicatorKind::State : IndicatorKind::SemiState;
  f.mesh = fem.mesh;
  f.values = parts.total();
  return f;
}

EstimatorParts est_adjoint_parts(const FemSetup& fem, const FEField& y, const FEField& z,
                                 const FEField& r, const ProblemData& data) {
  const Mesh& mesh = *fem.mesh;
  const QuadratureRule& rule = cell_rule();
  EstimatorParts parts;
  parts.volume = Eigen::VectorXd::Zero(mesh.n_cells());
  parts.divergence = Eigen::VectorXd::Zero(mesh.n_cells());
  parts.jump = Eigen::VectorXd::Zero(mesh.n_cells());

  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    double h = mesh.geometry(c).h;
    double vol = 0.0, div2 = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      const auto& bary = rule.points[q];
      Vec2 x = bary_to_xy(mesh, c, bary);
      Eigen::Vector2d yv = eval_vec(mesh, y, c, bary);
      Eigen::Matrix2d gy = eval_vec_grad(mesh, y, c, bary);
      Eigen::Vector2d zv = eval_vec(mesh, z, c, bary);
      Eigen::Matrix2d gz = eval_vec_grad(mesh, z, c, bary);
      Eigen::Vector2d lapz = eval_vec_lap(mesh, z, c, bary);
      Vec2 gr = eval_scalar_grad(mesh, r, c, bary);
      Eigen::Vector2d res =
          yv + data.nu * lapz - gy.transpose() * zv + gz * yv - as_vec2(gr);
      if (data.y_omega) res -= data.y_omega(x);
      vol += w * res.squaredNorm();
      double div = gz(0, 0) + gz(1, 1);
      div2 += w * div * div;
    }
    parts.volume(c) = h * h * vol;
    parts.divergence(c) = div2;
  }
  accumulate_jumps(fem, z, r, data.nu, parts.jump);
  return parts;
}

IndicatorField est_adjoint(const FemSetup& fem, const OptimalitySolution& sol,
                           const ProblemData& data) {
  EstimatorParts parts = est_adjoint_parts(fem, sol.y, sol.z, sol.r, data);
  IndicatorField f;
  f.kind = sol.scheme == Scheme::FullyDiscrete ? IndicatorKind::Adjoint : IndicatorKind::SemiAdjoint;
  f.mesh = fem.mesh;
  f.values = parts.total();
  return f;
}

IndicatorField est_control(const FemSetup& fem, const OptimalitySolution& sol,
                           const ProblemData& data) {
  if (sol.scheme != Scheme::FullyDiscrete)
    throw std::invalid_argument(
        "est_control: defined for the fully discrete scheme only (the semi-discrete "
        "control equals the projection identically)");
  const Mesh& mesh = *fem.mesh;
  const QuadratureRule& rule = cell_rule();
  IndicatorField f;
  f.kind = IndicatorKind::Control;
  f.mesh = fem.mesh;
  f.values = Eigen::VectorXd::Zero(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    double s = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      Eigen::Vector2d tilde = semi_control(mesh, sol.z, data, c, rule.points[q]);
      Eigen::Vector2d u = eval_vec(mesh, sol.u, c, rule.points[q]);
      s += w * (tilde - u).squaredNorm();
    }
    f.values(c) = s;
  }
  return f;
}

IndicatorField combine(const std::vector<IndicatorField>& parts) {
  if (parts.empty()) throw std::invalid_argument("combine: no parts");
  IndicatorField out;
  out.mesh = parts[0].mesh;
  out.values = Eigen::VectorXd::Zero(parts[0].values.size());
  bool semi = false;
  for (const auto& p : parts) {
    if (p.mesh != out.mesh || p.values.size() != out.values.size())
      throw std::invalid_argument("combine: indicator fields live on different meshes");
    if (p.kind == IndicatorKind::SemiState || p.kind == IndicatorKind::SemiAdjoint) semi = true;
    out.values += p.values;
  }
  out.kind = semi ? IndicatorKind::SemiCombined : IndicatorKind::Combined;
  return out;
}

IndicatorField oscillation(const Mesh& mesh,
                           const std::function<Eigen::VectorXd(Vec2)>& g, int n_components,
                           const std::vector<int>& subset) {
  const QuadratureRule& rule = cell_rule();
  IndicatorField f;
  f.kind = IndicatorKind::Oscillation;
  f.mesh = &mesh;
  f.values = Eigen::VectorXd::Zero(mesh.n_cells());
  std::vector<int> cells = subset;
  if (cells.empty())
    for (int c = 0; c < mesh.n_cells(); ++c) cells.push_back(c);
  auto tab = ref_table_p2(rule);
  for (int c : cells) {
    auto coeffs = l2_project_elementwise(mesh, c, g, n_components, rule);
    CellMap cm = cell_map(mesh, c);
    double h = mesh.geometry(c).h;
    double s = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      Vec2 x = bary_to_xy(mesh, c, rule.points[q]);
      Eigen::VectorXd gv = g(x);
      for (int comp = 0; comp < n_components; ++comp) {
        double proj = 0.0;
        for (int k = 0; k < 6; ++k) proj += coeffs(k, comp) * tab[q].val[k];
        double d = gv(comp) - proj;
        s += w * d * d;
      }
    }
    f.values(c) = h * h * s;
  }
  return f;
}

}  // namespace nsopt
