#include "nsopt/assembly.hpp"

#include <unordered_map>

namespace nsopt {

namespace {

struct AsmContext {
  QuadratureRule rule;
  std::vector<RefPointP2> p2;
  std::vector<RefPointP1> p1;
  AsmContext() : rule(make_rule(kAssemblyDegree)), p2(ref_table_p2(rule)), p1(ref_table_p1(rule)) {}
};

const AsmContext& ctx() {
  static const AsmContext c;
  return c;
}

Vec2 phys_grad(const CellMap& cm, Vec2 dref) {
  return {cm.Jinv[0][0] * dref.x + cm.Jinv[1][0] * dref.y,
          cm.Jinv[0][1] * dref.x + cm.Jinv[1][1] * dref.y};
}

SpMat from_triplets(std::vector<Triplet>& t, int rows, int cols) {
  SpMat m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

SpMat assemble_viscous(const Mesh& mesh, const DofMap& vmap, double nu) {
  const auto& C = ctx();
  std::vector<Triplet> trips;
  trips.reserve(mesh.n_cells() * 72);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    double local[6][6] = {};
    for (int q = 0; q < C.rule.size(); ++q) {
      double w = C.rule.weights[q] * cm.det;
      Vec2 g[6];
      for (int k = 0; k < 6; ++k) g[k] = phys_grad(cm, C.p2[q].dref[k]);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) local[i][j] += w * nu * dot(g[i], g[j]);
    }
    const auto& cn = vmap.cell_nodes[c];
    for (int comp = 0; comp < 2; ++comp)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          trips.emplace_back(vmap.dof(comp, cn[i]), vmap.dof(comp, cn[j]), local[i][j]);
  }
  return from_triplets(trips, vmap.n_dofs, vmap.n_dofs);
}

SpMat assemble_mass(const Mesh& mesh, const DofMap& vmap) {
  const auto& C = ctx();
  std::vector<Triplet> trips;
  trips.reserve(mesh.n_cells() * 72);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    double local[6][6] = {};
    for (int q = 0; q < C.rule.size(); ++q) {
      double w = C.rule.weights[q] * cm.det;
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) local[i][j] += w * C.p2[q].val[i] * C.p2[q].val[j];
    }
    const auto& cn = vmap.cell_nodes[c];
    for (int comp = 0; comp < 2; ++comp)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          trips.emplace_back(vmap.dof(comp, cn[i]), vmap.dof(comp, cn[j]), local[i][j]);
  }
  return from_triplets(trips, vmap.n_dofs, vmap.n_dofs);
}

std::pair<SpMat, SpMat> assemble_convection(const Mesh& mesh, const DofMap& vmap,
                                            const FEField& w) {
  const auto& C = ctx();
  std::vector<Triplet> t1, t2;
  t1.reserve(mesh.n_cells() * 72);
  t2.reserve(mesh.n_cells() * 144);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    const auto& cn = vmap.cell_nodes[c];
    double loc1[6][6] = {};
    double loc2[2][2][6][6] = {};  // [d][cc][i][j]
    for (int q = 0; q < C.rule.size(); ++q) {
      double wq = C.rule.weights[q] * cm.det;
      Vec2 g[6];
      for (int k = 0; k < 6; ++k) g[k] = phys_grad(cm, C.p2[q].dref[k]);
      // frozen field value and gradient at this point
      double wv[2] = {0, 0};
      double dw[2][2] = {};  // dw[d][cc] = d w_d / d x_cc
      for (int k = 0; k < 6; ++k) {
        int n = cn[k];
        for (int d = 0; d < 2; ++d) {
          double coef = w.coeffs(vmap.dof(d, n));
          wv[d] += coef * C.p2[q].val[k];
          dw[d][0] += coef * g[k].x;
          dw[d][1] += coef * g[k].y;
        }
      }
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          double adv = wv[0] * g[j].x + wv[1] * g[j].y;  // (w . grad) phi_j
          loc1[i][j] += wq * adv * C.p2[q].val[i];
          double pp = wq * C.p2[q].val[i] * C.p2[q].val[j];
          for (int d = 0; d < 2; ++d)
            for (int cc = 0; cc < 2; ++cc) loc2[d][cc][i][j] += pp * dw[d][cc];
        }
      }
    }
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        for (int comp = 0; comp < 2; ++comp)
          t1.emplace_back(vmap.dof(comp, cn[i]), vmap.dof(comp, cn[j]), loc1[i][j]);
        for (int d = 0; d < 2; ++d)
          for (int cc = 0; cc < 2; ++cc)
            t2.emplace_back(vmap.dof(d, cn[i]), vmap.dof(cc, cn[j]), loc2[d][cc][i][j]);
      }
    }
  }
  return {from_triplets(t1, vmap.n_dofs, vmap.n_dofs), from_triplets(t2, vmap.n_dofs, vmap.n_dofs)};
}

std::pair<SpMat, SpMat> assemble_adjoint_coupling(const Mesh& mesh, const DofMap& vmap,
                                                  const FEField& z) {
  const auto& C = ctx();
  std::vector<Triplet> t1, t2;
  t1.reserve(mesh.n_cells() * 144);
  t2.reserve(mesh.n_cells() * 144);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    const auto& cn = vmap.cell_nodes[c];
    double loc1[2][2][6][6] = {};
    double loc2[2][2][6][6] = {};
    for (int q = 0; q < C.rule.size(); ++q) {
      double wq = C.rule.weights[q] * cm.det;
      Vec2 g[6];
      for (int k = 0; k < 6; ++k) g[k] = phys_grad(cm, C.p2[q].dref[k]);
      double zv[2] = {0, 0};
      for (int k = 0; k < 6; ++k)
        for (int d = 0; d < 2; ++d) zv[d] += z.coeffs(vmap.dof(d, cn[k])) * C.p2[q].val[k];
      for (int i = 0; i < 6; ++i) {
        double gi[2] = {g[i].x, g[i].y};
        for (int j = 0; j < 6; ++j) {
          double gj[2] = {g[j].x, g[j].y};
          for (int d = 0; d < 2; ++d) {
            for (int cc = 0; cc < 2; ++cc) {
              // G1: (phi_j dphi_i/dx_cc) z_d ; G2: (phi_i dphi_j/dx_d) z_cc
              loc1[d][cc][i][j] += wq * C.p2[q].val[j] * gi[cc] * zv[d];
              loc2[d][cc][i][j] += wq * C.p2[q].val[i] * gj[d] * zv[cc];
            }
          }
        }
      }
    }
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        for (int d = 0; d < 2; ++d)
          for (int cc = 0; cc < 2; ++cc) {
            t1.emplace_back(vmap.dof(d, cn[i]), vmap.dof(cc, cn[j]), loc1[d][cc][i][j]);
            t2.emplace_back(vmap.dof(d, cn[i]), vmap.dof(cc, cn[j]), loc2[d][cc][i][j]);
          }
  }
  return {from_triplets(t1, vmap.n_dofs, vmap.n_dofs), from_triplets(t2, vmap.n_dofs, vmap.n_dofs)};
}

SpMat assemble_divergence(const Mesh& mesh, const DofMap& vmap, const DofMap& pmap) {
  const auto& C = ctx();
  std::vector<Triplet> trips;
  trips.reserve(mesh.n_cells() * 36);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    const auto& vn = vmap.cell_nodes[c];
    const auto& pn = pmap.cell_nodes[c];
    double local[3][2][6] = {};
    for (int q = 0; q < C.rule.size(); ++q) {
      double wq = C.rule.weights[q] * cm.det;
      Vec2 g[6];
      for (int k = 0; k < 6; ++k) g[k] = phys_grad(cm, C.p2[q].dref[k]);
      for (int i = 0; i < 3; ++i) {
        double qi = wq * C.p1[q].val[i];
        for (int j = 0; j < 6; ++j) {
          local[i][0][j] += qi * g[j].x;
          local[i][1][j] += qi * g[j].y;
        }
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int comp = 0; comp < 2; ++comp)
        for (int j = 0; j < 6; ++j)
          trips.emplace_back(pn[i], vmap.dof(comp, vn[j]), local[i][comp][j]);
  }
  return from_triplets(trips, pmap.n_dofs, vmap.n_dofs);
}

Eigen::VectorXd pressure_integral_vector(const Mesh& mesh, const DofMap& pmap) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(pmap.n_dofs);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    double a = mesh.cell_area(c);
    for (int i = 0; i < 3; ++i) m(pmap.cell_nodes[c][i]) += a / 3.0;
  }
  return m;
}

Eigen::VectorXd assemble_load(const Mesh& mesh, const DofMap& vmap, const VecFn& f,
                              const QuadratureRule& rule) {
  auto p2 = ref_table_p2(rule);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(vmap.n_dofs);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    CellMap cm = cell_map(mesh, c);
    const auto& cn = vmap.cell_nodes[c];
    for (int q = 0; q < rule.size(); ++q) {
      double wq = rule.weights[q] * cm.det;
      Eigen::Vector2d fv = f(bary_to_xy(mesh, c, rule.points[q]));
      for (int i = 0; i < 6; ++i) {
        rhs(vmap.dof(0, cn[i])) += wq * fv(0) * p2[q].val[i];
        rhs(vmap.dof(1, cn[i])) += wq * fv(1) * p2[q].val[i];
      }
    }
  }
  return rhs;
}

void eliminate_dirichlet(std::vector<Triplet>& trips, Eigen::VectorXd& rhs,
                         const std::vector<std::pair<int, double>>& bc, int n) {
  std::unordered_map<int, double> fixed;
  fixed.reserve(bc.size());
  for (auto [d, v] : bc) fixed.emplace(d, v);
  std::vector<Triplet> out;
  out.reserve(trips.size() + bc.size());
  for (const auto& t : trips) {
    bool rfix = fixed.count(t.row());
    bool cfix = fixed.count(t.col());
    if (rfix) continue;
    if (cfix) {
      rhs(t.row()) -= t.value() * fixed[t.col()];
      continue;
    }
    out.push_back(t);
  }
  for (auto [d, v] : bc) {
    out.emplace_back(d, d, 1.0);
    rhs(d) = v;
  }
  (void)n;
  trips = std::move(out);
}

std::vector<std::pair<int, double>> dirichlet_values(const DofMap& vmap, const VecFn& g) {
  std::vector<std::pair<int, double>> bc;
  bc.reserve(vmap.boundary_nodes.size() * 2);
  for (int n : vmap.boundary_nodes) {
    Eigen::Vector2d v = g(vmap.node_coords[n]);
    bc.emplace_back(vmap.dof(0, n), v(0));
    bc.emplace_back(vmap.dof(1, n), v(1));
  }
  return bc;
}

}  // namespace nsopt
