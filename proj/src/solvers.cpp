#include "nsopt/solvers.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nsopt {

namespace {

const QuadratureRule& rhs_rule() {
  static const QuadratureRule r = make_rule(19);
  return r;
}
const QuadratureRule& rule5() {
  static const QuadratureRule r = make_rule(5);
  return r;
}

Eigen::Vector2d zero_fn(Vec2) { return Eigen::Vector2d::Zero(); }

VecFn or_zero(const VecFn& f) { return f ? f : VecFn(zero_fn); }

void append_block(std::vector<Triplet>& trips, const SpMat& m, int row_off, int col_off,
                  double scale = 1.0) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()) + row_off,
                         static_cast<int>(it.col()) + col_off, scale * it.value());
}

void append_transposed(std::vector<Triplet>& trips, const SpMat& m, int row_off, int col_off,
                       double scale = 1.0) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.col()) + row_off,
                         static_cast<int>(it.row()) + col_off, scale * it.value());
}

Eigen::VectorXd lu_solve(std::vector<Triplet>& trips, Eigen::VectorXd& rhs, int n,
                         const std::vector<std::pair<int, double>>& bc, const char* what) {
  eliminate_dirichlet(trips, rhs, bc, n);
  SpMat K(n, n);
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(K);
  lu.factorize(K);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) + ": sparse factorization failed (singular system)");
  Eigen::VectorXd x = lu.solve(rhs);
  double rn = (K * x - rhs).norm();
  double scale = std::max(1.0, rhs.norm());
  if (!(rn <= 1e-8 * scale)) {
    std::ostringstream os;
    os << what << ": direct solve residual " << rn / scale << " exceeds tolerance";
    throw std::runtime_error(os.str());
  }
  return x;
}

}  // namespace

FemSetup make_setup(const Mesh& mesh) {
  FemSetup s;
  s.mesh = &mesh;
  s.vmap = std::make_shared<DofMap>(make_dofmap(mesh, SpaceKind::P2Vector));
  s.pmap = std::make_shared<DofMap>(make_dofmap(mesh, SpaceKind::P1Scalar));
  return s;
}

SmallnessReport check_smallness(const ProblemData& data, double domain_measure) {
  SmallnessReport r;
  r.C_b = std::sqrt(domain_measure) / 2.0;
  // (d-1)/sqrt(d) |Omega|^{1/d} with d = 2.
  r.C_2 = std::sqrt(domain_measure) / std::sqrt(2.0);
  Eigen::Vector2d mx = data.a.cwiseAbs().cwiseMax(data.b.cwiseAbs());
  r.M_ad = mx.norm() * std::sqrt(domain_measure);
  r.theta = r.C_b * r.C_2 * r.M_ad / (data.nu * data.nu);
  r.satisfied = r.theta < 1.0;
  return r;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_saddle(const SaddleSystem& sys) {
  int nv = sys.n_v, np = sys.n_p;
  int n = nv + np + 1;
  std::vector<Triplet> trips;
  trips.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros() + 2 * np);
  append_block(trips, sys.A, 0, 0);
  append_transposed(trips, sys.B, 0, nv, -1.0);  // -B^T p in the momentum rows
  append_block(trips, sys.B, nv, 0);
  for (int q = 0; q < np; ++q) {
    if (sys.m(q) == 0.0) continue;
    trips.emplace_back(nv + q, n - 1, sys.m(q));  // mean multiplier in continuity
    trips.emplace_back(n - 1, nv + q, sys.m(q));  // mean constraint row
  }
  Eigen::VectorXd rhs(n);
  rhs.head(nv) = sys.rhs_momentum;
  rhs.segment(nv, np) = sys.rhs_mass;
  rhs(n - 1) = 0.0;
  Eigen::VectorXd x = lu_solve(trips, rhs, n, sys.dirichlet, "solve_saddle");
  Eigen::VectorXd u = x.head(nv);
  Eigen::VectorXd p = x.segment(nv, np);
  double area = sys.m.sum();  // sum of m entries = |Omega|
  p.array() -= sys.m.dot(p) / area;
  return {u, p};
}

std::pair<FEField, FEField> solve_state(const FemSetup& fem, const ProblemData& data,
                                        const Eigen::VectorXd& load, const SolverOptions& opt,
                                        const FEField* warm_y) {
  const Mesh& mesh = *fem.mesh;
  SpMat K = assemble_viscous(mesh, *fem.vmap, data.nu);
  SpMat B = assemble_divergence(mesh, *fem.vmap, *fem.pmap);
  Eigen::VectorXd m = pressure_integral_vector(mesh, *fem.pmap);
  auto bc = dirichlet_values(*fem.vmap, or_zero(data.state_bc));

  if (opt.log) {
    SmallnessReport sr = check_smallness(data, mesh.total_area());
    if (!sr.satisfied)
      *opt.log << "solve_state warn=smallness_violated theta=" << sr.theta << "\n";
  }

  FEField y = make_field(fem.vmap);
  if (warm_y) y.coeffs = warm_y->coeffs;
  FEField p = make_field(fem.pmap);
  double inc = 0.0;
  double best_inc = std::numeric_limits<double>::infinity();
  int no_progress = 0;
  for (int it = 0; it < opt.picard_max; ++it) {
    auto [N1, N2] = assemble_convection(mesh, *fem.vmap, y);
    (void)N2;
    SaddleSystem sys;
    sys.n_v = fem.vmap->n_dofs;
    sys.n_p = fem.pmap->n_dofs;
    sys.A = K + N1;
    sys.B = B;
    sys.m = m;
    sys.rhs_momentum = load;
    sys.rhs_mass = Eigen::VectorXd::Zero(sys.n_p);
    sys.dirichlet = bc;
    auto [ynew, pnew] = solve_saddle(sys);
    Eigen::VectorXd d = ynew - y.coeffs;
    inc = std::sqrt(std::abs(d.dot(K * d)) / data.nu);
    y.coeffs = ynew;
    p.coeffs = pnew;
    if (opt.log) *opt.log << "solve_state iter=" << it + 1 << " h1_increment=" << inc << "\n";
    double scale = 1.0 + std::sqrt(std::abs(y.coeffs.dot(K * y.coeffs)) / data.nu);
    // The direct solve leaves a roundoff floor that grows with the condition
    // number; accept once increments stall there, far below discretization
    // accuracy.
    if (inc < 0.5 * best_inc) {
      best_inc = inc;
      no_progress = 0;
    } else {
      ++no_progress;
    }
    if (inc <= opt.picard_tol || inc <= 1e-14 * scale ||
        (no_progress >= 5 && inc <= 1e-6 * scale))
      return {y, p};
  }
  std::ostringstream os;
  os << "solve_state: Picard did not converge in " << opt.picard_max
     << " iterations (last H1 increment " << inc << ")";
  throw std::runtime_error(os.str());
}

std::pair<FEField, FEField> solve_adjoint(const FemSetup& fem, const ProblemData& data,
                                          const FEField& y, const SolverOptions& opt) {
  (void)opt;
  const Mesh& mesh = *fem.mesh;
  SpMat K = assemble_viscous(mesh, *fem.vmap, data.nu);
  auto [N1, N2] = assemble_convection(mesh, *fem.vmap, y);
  SpMat M = assemble_mass(mesh, *fem.vmap);
  SaddleSystem sys;
  sys.n_v = fem.vmap->n_dofs;
  sys.n_p = fem.pmap->n_dofs;
  sys.A = K + SpMat(N1.transpose()) + SpMat(N2.transpose());
  sys.B = assemble_divergence(mesh, *fem.vmap, *fem.pmap);
  sys.m = pressure_integral_vector(mesh, *fem.pmap);
  sys.rhs_momentum = M * y.coeffs - assemble_load(mesh, *fem.vmap, or_zero(data.y_omega), rhs_rule());
  sys.rhs_mass = Eigen::VectorXd::Zero(sys.n_p);
  sys.dirichlet = dirichlet_values(*fem.vmap, or_zero(data.adjoint_bc));
  auto [zc, rc] = solve_saddle(sys);
  FEField z = make_field(fem.vmap);
  z.coeffs = zc;
  FEField r = make_field(fem.pmap);
  r.coeffs = rc;
  return {z, r};
}

Eigen::Vector2d clamp_control(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  return v.cwiseMax(a).cwiseMin(b);
}

FEField project_control(const FEField& z, double alpha, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
  FEField u = make_field(z.map);
  const DofMap& dm = *z.map;
  for (int n = 0; n < dm.n_scalar_nodes; ++n) {
    Eigen::Vector2d arg(-z.coeffs(dm.dof(0, n)) / alpha, -z.coeffs(dm.dof(1, n)) / alpha);
    Eigen::Vector2d c = clamp_control(arg, a, b);
    u.coeffs(dm.dof(0, n)) = c(0);
    u.coeffs(dm.dof(1, n)) = c(1);
  }
  return u;
}

Eigen::Vector2d semi_control(const Mesh& mesh, const FEField& z, const ProblemData& data,
                             int cell, const std::array<double, 3>& bary) {
  Eigen::Vector2d arg = -eval_vec(mesh, z, cell, bary) / data.alpha;
  return clamp_control(arg, data.a, data.b);
}

std::vector<char> detect_kink_cells(const FemSetup& fem, const FEField& z,
                                    const ProblemData& data) {
  const Mesh& mesh = *fem.mesh;
  const QuadratureRule& r5 = rule5();
  std::vector<char> kink(mesh.n_cells(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    for (int comp = 0; comp < 2 && !kink[c]; ++comp) {
      int first = -1;
      for (int q = 0; q < r5.size(); ++q) {
        Eigen::Vector2d arg = -eval_vec(mesh, z, c, r5.points[q]) / data.alpha;
        int inactive = (arg(comp) > data.a(comp) && arg(comp) < data.b(comp)) ? 1 : 0;
        if (q == 0) first = inactive;
        else if (inactive != first) { kink[c] = 1; break; }
      }
    }
  }
  return kink;
}

ControlTerm assemble_control_term(const FemSetup& fem, const FEField& z,
                                  const ProblemData& data, QuadVariant variant) {
  const Mesh& mesh = *fem.mesh;
  const DofMap& vmap = *fem.vmap;
  const QuadratureRule& hi = rhs_rule();
  const QuadratureRule& lo = rule5();
  std::vector<char> use_lo;
  if (variant == QuadVariant::S5) use_lo.assign(mesh.n_cells(), 1);
  else if (variant == QuadVariant::S5c) use_lo = detect_kink_cells(fem, z, data);
  else use_lo.assign(mesh.n_cells(), 0);

  auto hi_tab = ref_table_p2(hi);
  auto lo_tab = ref_table_p2(lo);

  ControlTerm ct;
  ct.load = Eigen::VectorXd::Zero(vmap.n_dofs);
  std::vector<Triplet> trips;
  trips.reserve(mesh.n_cells() * 72);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const QuadratureRule& rule = use_lo[c] ? lo : hi;
    const auto& tab = use_lo[c] ? lo_tab : hi_tab;
    CellMap cm = cell_map(mesh, c);
    const auto& cn = vmap.cell_nodes[c];
    double locD[2][6][6] = {};
    for (int q = 0; q < rule.size(); ++q) {
      double w = rule.weights[q] * cm.det;
      Eigen::Vector2d zv = Eigen::Vector2d::Zero();
      for (int k = 0; k < 6; ++k) {
        zv(0) += z.coeffs(vmap.dof(0, cn[k])) * tab[q].val[k];
        zv(1) += z.coeffs(vmap.dof(1, cn[k])) * tab[q].val[k];
      }
      Eigen::Vector2d arg = -zv / data.alpha;
      Eigen::Vector2d g = clamp_control(arg, data.a, data.b);
      for (int comp = 0; comp < 2; ++comp) {
        bool inactive = arg(comp) > data.a(comp) && arg(comp) < data.b(comp);
        for (int i = 0; i < 6; ++i) {
          ct.load(vmap.dof(comp, cn[i])) += w * g(comp) * tab[q].val[i];
          if (inactive)
            for (int j = 0; j < 6; ++j) locD[comp][i][j] += w * tab[q].val[i] * tab[q].val[j];
        }
      }
    }
    for (int comp = 0; comp < 2; ++comp)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          if (locD[comp][i][j] != 0.0)
            trips.emplace_back(vmap.dof(comp, cn[i]), vmap.dof(comp, cn[j]), locD[comp][i][j]);
  }
  ct.indicator_mass.resize(vmap.n_dofs, vmap.n_dofs);
  ct.indicator_mass.setFromTriplets(trips.begin(), trips.end());
  return ct;
}

namespace {

// Layout of the coupled optimality system:
// [0,nv) y | [nv,nv+np) p | nv+np: lam_p | [oz,oz+nv) z | [oz+nv,oz+nv+np) r | last: lam_r
struct CoupledLayout {
  int nv, np, oz, n;
  explicit CoupledLayout(const FemSetup& fem) {
    nv = fem.vmap->n_dofs;
    np = fem.pmap->n_dofs;
    oz = nv + np + 1;
    n = 2 * (nv + np + 1);
  }
};

struct CoupledResult {
  Eigen::VectorXd y, p, z, r;
};

// One linear solve of the coupled system
//   Ay y  - B^T p + Cyz z            = rhs_mom
//   B  y  + m lam_p                  = 0
//   m^T p                            = 0
//   Czy y + Az z - B^T r             = rhs_adj
//   B  z + m lam_r                   = 0
//   m^T r                            = 0
CoupledResult solve_coupled(const FemSetup& fem, const SpMat& Ay, const SpMat* Cyz,
                            const SpMat& Czy, const SpMat& Az, const SpMat& B,
                            const Eigen::VectorXd& m, const Eigen::VectorXd& rhs_mom,
                            const Eigen::VectorXd& rhs_adj,
                            const std::vector<std::pair<int, double>>& bc_y,
                            const std::vector<std::pair<int, double>>& bc_z,
                            bool mean_free_shift = true) {
  CoupledLayout L(fem);
  std::vector<Triplet> trips;
  trips.reserve(Ay.nonZeros() + Az.nonZeros() + Czy.nonZeros() +
                (Cyz ? Cyz->nonZeros() : 0) + 4 * B.nonZeros() + 4 * L.np);
  append_block(trips, Ay, 0, 0);
  append_transposed(trips, B, 0, L.nv, -1.0);
  if (Cyz) append_block(trips, *Cyz, 0, L.oz);
  append_block(trips, B, L.nv, 0);
  append_block(trips, Czy, L.oz, 0);
  append_block(trips, Az, L.oz, L.oz);
  append_transposed(trips, B, L.oz, L.oz + L.nv, -1.0);
  append_block(trips, B, L.oz + L.nv, L.oz);
  for (int q = 0; q < L.np; ++q) {
    if (m(q) == 0.0) continue;
    trips.emplace_back(L.nv + q, L.oz - 1, m(q));
    trips.emplace_back(L.oz - 1, L.nv + q, m(q));
    trips.emplace_back(L.oz + L.nv + q, L.n - 1, m(q));
    trips.emplace_back(L.n - 1, L.oz + L.nv + q, m(q));
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L.n);
  rhs.head(L.nv) = rhs_mom;
  rhs.segment(L.oz, L.nv) = rhs_adj;

  std::vector<std::pair<int, double>> bc;
  bc.reserve(bc_y.size() + bc_z.size());
  for (auto [d, v] : bc_y) bc.emplace_back(d, v);
  for (auto [d, v] : bc_z) bc.emplace_back(L.oz + d, v);

  Eigen::VectorXd x = lu_solve(trips, rhs, L.n, bc, "solve_coupled");
  CoupledResult res;
  res.y = x.head(L.nv);
  res.p = x.segment(L.nv, L.np);
  res.z = x.segment(L.oz, L.nv);
  res.r = x.segment(L.oz + L.nv, L.np);
  if (mean_free_shift) {
    double area = m.sum();
    res.p.array() -= m.dot(res.p) / area;
    res.r.array() -= m.dot(res.r) / area;
  }
  return res;
}

double h1_of(const SpMat& K, double nu, const Eigen::VectorXd& d) {
  return std::sqrt(std::abs(d.dot(K * d)) / nu);
}

}  // namespace

OptimalitySolution active_set_solve(const FemSetup& fem, const ProblemData& data,
                                    const SolverOptions& opt, const OptimalitySolution* warm) {
  const Mesh& mesh = *fem.mesh;
  const DofMap& vmap = *fem.vmap;
  int nv = vmap.n_dofs;
  SpMat K = assemble_viscous(mesh, vmap, data.nu);
  SpMat M = assemble_mass(mesh, vmap);
  SpMat B = assemble_divergence(mesh, vmap, *fem.pmap);
  Eigen::VectorXd m = pressure_integral_vector(mesh, *fem.pmap);
  Eigen::VectorXd load_f = assemble_load(mesh, vmap, or_zero(data.f), rhs_rule());
  Eigen::VectorXd load_yom = assemble_load(mesh, vmap, or_zero(data.y_omega), rhs_rule());
  auto bc_y = dirichlet_values(vmap, or_zero(data.state_bc));
  auto bc_z = dirichlet_values(vmap, or_zero(data.adjoint_bc));
  SpMat Czy = -M;

  OptimalitySolution sol;
  sol.scheme = Scheme::FullyDiscrete;
  sol.y = make_field(fem.vmap);
  sol.p = make_field(fem.pmap);
  sol.z = make_field(fem.vmap);
  sol.r = make_field(fem.pmap);
  if (warm && warm->y.coeffs.size() == nv) {
    sol.y.coeffs = warm->y.coeffs;
    sol.z.coeffs = warm->z.coeffs;
  } else {
    // Cold start: guessing every control dof inactive makes the coupled
    // system behave like the unconstrained problem, whose control scales like
    // 1/alpha and wrecks the lagged-convection loop for small alpha. A cheap
    // state/adjoint pre-solve with u = clamp(0) gives a sane initial set.
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < nv; ++i) {
      int comp = i / vmap.n_scalar_nodes;
      u0(i) = std::min(std::max(0.0, data.a(comp)), data.b(comp));
    }
    auto [y0, p0] = solve_state(fem, data, load_f + M * u0, opt);
    auto [z0, r0] = solve_adjoint(fem, data, y0, opt);
    sol.y = y0;
    sol.p = p0;
    sol.z = z0;
    sol.r = r0;
  }

  // Active-set state per control dof: -1 lower bound, 0 inactive, +1 upper.
  auto sets_from_z = [&](const Eigen::VectorXd& z) {
    std::vector<signed char> s(nv, 0);
    for (int i = 0; i < nv; ++i) {
      int comp = i / vmap.n_scalar_nodes;
      double arg = -z(i) / data.alpha;
      if (arg < data.a(comp)) s[i] = -1;
      else if (arg > data.b(comp)) s[i] = 1;
    }
    return s;
  };
  std::vector<signed char> sets = sets_from_z(sol.z.coeffs);

  int changed = 0;
  for (int outer = 1; outer <= opt.active_set_max; ++outer) {
    // Momentum coupling for the inactive part u = -z/alpha: (1/alpha) M with
    // active columns dropped; active part contributes M u_act to the load.
    Eigen::VectorXd u_act = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < nv; ++i) {
      int comp = i / vmap.n_scalar_nodes;
      if (sets[i] == -1) u_act(i) = data.a(comp);
      else if (sets[i] == 1) u_act(i) = data.b(comp);
    }
    std::vector<Triplet> ctrips;
    ctrips.reserve(M.nonZeros());
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it)
        if (sets[it.col()] == 0)
          ctrips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                              it.value() / data.alpha);
    SpMat Cyz(nv, nv);
    Cyz.setFromTriplets(ctrips.begin(), ctrips.end());
    Eigen::VectorXd rhs_mom = load_f + M * u_act;
    Eigen::VectorXd rhs_adj = -load_yom;

    double inc = 0.0;
    double best_inc = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    for (int inner = 1; inner <= opt.picard_max; ++inner) {
      auto [N1, N2] = assemble_convection(mesh, vmap, sol.y);
      SpMat Ay = K + N1;
      SpMat Az = K + SpMat(N1.transpose()) + SpMat(N2.transpose());
      CoupledResult res =
          solve_coupled(fem, Ay, &Cyz, Czy, Az, B, m, rhs_mom, rhs_adj, bc_y, bc_z);
      inc = h1_of(K, data.nu, res.y - sol.y.coeffs) + h1_of(K, data.nu, res.z - sol.z.coeffs);
      sol.y.coeffs = res.y;
      sol.p.coeffs = res.p;
      sol.z.coeffs = res.z;
      sol.r.coeffs = res.r;
      if (opt.log)
        *opt.log << "active_set outer=" << outer << " inner=" << inner
                 << " h1_increment=" << inc << "\n";
      double scale =
          1.0 + h1_of(K, data.nu, sol.y.coeffs) + h1_of(K, data.nu, sol.z.coeffs);
      // Accept once increments stall at the direct solver's roundoff floor,
      // which rises with the condition number on finer meshes.
      if (inc < 0.5 * best_inc) {
        best_inc = inc;
        no_progress = 0;
      } else {
        ++no_progress;
      }
      if (inc <= opt.picard_tol || inc <= 1e-13 * scale ||
          (no_progress >= 5 && inc <= 1e-6 * scale))
        break;
      if (inner == opt.picard_max)
        throw std::runtime_error("active_set_solve: inner fixed point did not converge");
    }
    sol.residual_history.push_back(inc);
    sol.outer_iterations = outer;

    std::vector<signed char> next = sets_from_z(sol.z.coeffs);
    changed = 0;
    for (int i = 0; i < nv; ++i)
      if (next[i] != sets[i]) ++changed;
    if (opt.log)
      *opt.log << "active_set outer=" << outer << " set_changes=" << changed << " active="
               << std::count_if(next.begin(), next.end(), [](signed char s) { return s != 0; })
               << "\n";
    if (changed == 0) {
      sol.u = project_control(sol.z, data.alpha, data.a, data.b);
      return sol;
    }
    sets = std::move(next);
  }
  std::ostringstream os;
  os << "active_set_solve: active sets did not settle in " << opt.active_set_max
     << " outer iterations (" << changed << " dofs changed last)";
  throw std::runtime_error(os.str());
}

OptimalitySolution newton_semidiscrete(const FemSetup& fem, const ProblemData& data,
                                       QuadVariant variant, const SolverOptions& opt,
                                       const OptimalitySolution* warm) {
  const Mesh& mesh = *fem.mesh;
  const DofMap& vmap = *fem.vmap;
  int nv = vmap.n_dofs;
  int np = fem.pmap->n_dofs;
  SpMat K = assemble_viscous(mesh, vmap, data.nu);
  SpMat M = assemble_mass(mesh, vmap);
  SpMat B = assemble_divergence(mesh, vmap, *fem.pmap);
  Eigen::VectorXd m = pressure_integral_vector(mesh, *fem.pmap);
  Eigen::VectorXd load_f = assemble_load(mesh, vmap, or_zero(data.f), rhs_rule());
  Eigen::VectorXd load_yom = assemble_load(mesh, vmap, or_zero(data.y_omega), rhs_rule());
  auto bc_y = dirichlet_values(vmap, or_zero(data.state_bc));
  auto bc_z = dirichlet_values(vmap, or_zero(data.adjoint_bc));
  std::vector<std::pair<int, double>> bc0_y, bc0_z;  // homogeneous for increments
  for (auto [d, v] : bc_y) bc0_y.emplace_back(d, 0.0);
  for (auto [d, v] : bc_z) bc0_z.emplace_back(d, 0.0);

  OptimalitySolution sol;
  sol.scheme = Scheme::SemiDiscrete;
  sol.y = make_field(fem.vmap);
  sol.p = make_field(fem.pmap);
  sol.z = make_field(fem.vmap);
  sol.r = make_field(fem.pmap);
  double lam_p = 0.0, lam_r = 0.0;
  if (warm && warm->y.coeffs.size() == nv) {
    sol.y.coeffs = warm->y.coeffs;
    sol.z.coeffs = warm->z.coeffs;
    sol.p.coeffs = warm->p.coeffs;
    sol.r.coeffs = warm->r.coeffs;
  }
  // Impose the boundary data exactly: increments are homogeneous on the
  // boundary, so any defect in the start iterate (e.g. a prolonged coarse
  // solution) would persist through all Newton steps.
  for (auto [d, v] : bc_y) sol.y.coeffs(d) = v;
  for (auto [d, v] : bc_z) sol.z.coeffs(d) = v;

  CoupledLayout L(fem);
  auto residual = [&](const SpMat& N1, const SpMat& N2, const ControlTerm& ct,
                      Eigen::VectorXd& F) {
    (void)N2;
    F.setZero(L.n);
    F.head(nv) = K * sol.y.coeffs + N1 * sol.y.coeffs - B.transpose() * sol.p.coeffs -
                 ct.load - load_f;
    F.segment(nv, np) = B * sol.y.coeffs + lam_p * m;
    F(L.oz - 1) = m.dot(sol.p.coeffs);
    F.segment(L.oz, nv) = K * sol.z.coeffs + N1.transpose() * sol.z.coeffs +
                          N2.transpose() * sol.z.coeffs - B.transpose() * sol.r.coeffs -
                          M * sol.y.coeffs + load_yom;
    F.segment(L.oz + nv, np) = B * sol.z.coeffs + lam_r * m;
    F(L.n - 1) = m.dot(sol.r.coeffs);
    // Rows of Dirichlet dofs are identities on the increment; the iterate
    // satisfies the data exactly, so their residual is zero.
    for (auto [d, v] : bc_y) F(d) = 0.0;
    for (auto [d, v] : bc_z) F(L.oz + d) = 0.0;
  };

  auto newton_step = [&](bool full_newton) {
    auto [N1, N2] = assemble_convection(mesh, vmap, sol.y);
    ControlTerm ct = assemble_control_term(fem, sol.z, data, variant);
    Eigen::VectorXd F;
    residual(N1, N2, ct, F);
    double res = F.norm();

    SpMat Ay = full_newton ? SpMat(K + N1 + N2) : SpMat(K + N1);
    SpMat Az = K + SpMat(N1.transpose()) + SpMat(N2.transpose());
    SpMat Cyz = SpMat(ct.indicator_mass * (1.0 / data.alpha));
    SpMat Czy;
    if (full_newton) {
      auto [G1, G2] = assemble_adjoint_coupling(mesh, vmap, sol.z);
      Czy = SpMat(G1 + G2 - M);
    } else {
      Czy = SpMat(-M);
    }

    // Assemble the full Jacobian and solve J dX = -F for all blocks at once.
    std::vector<Triplet> trips;
    append_block(trips, Ay, 0, 0);
    append_transposed(trips, B, 0, nv, -1.0);
    append_block(trips, Cyz, 0, L.oz);
    append_block(trips, B, nv, 0);
    append_block(trips, Czy, L.oz, 0);
    append_block(trips, Az, L.oz, L.oz);
    append_transposed(trips, B, L.oz, L.oz + nv, -1.0);
    append_block(trips, B, L.oz + nv, L.oz);
    for (int q = 0; q < np; ++q) {
      if (m(q) == 0.0) continue;
      trips.emplace_back(nv + q, L.oz - 1, m(q));
      trips.emplace_back(L.oz - 1, nv + q, m(q));
      trips.emplace_back(L.oz + nv + q, L.n - 1, m(q));
      trips.emplace_back(L.n - 1, L.oz + nv + q, m(q));
    }
    Eigen::VectorXd rhs = -F;
    std::vector<std::pair<int, double>> bc;
    for (auto [d, v] : bc0_y) bc.emplace_back(d, 0.0);
    for (auto [d, v] : bc0_z) bc.emplace_back(L.oz + d, 0.0);
    Eigen::VectorXd dx = lu_solve(trips, rhs, L.n, bc, "newton_semidiscrete");
    sol.y.coeffs += dx.head(nv);
    sol.p.coeffs += dx.segment(nv, np);
    lam_p += dx(L.oz - 1);
    sol.z.coeffs += dx.segment(L.oz, nv);
    sol.r.coeffs += dx.segment(L.oz + nv, np);
    lam_r += dx(L.n - 1);
    double step = dx.norm();
    return std::make_pair(res, step);
  };

  auto current_residual = [&]() {
    auto [N1, N2] = assemble_convection(mesh, vmap, sol.y);
    ControlTerm ct = assemble_control_term(fem, sol.z, data, variant);
    Eigen::VectorXd F;
    residual(N1, N2, ct, F);
    return F.norm();
  };

  if (!warm) {
    // A few lagged-convection steps to reach Newton's contraction region.
    for (int k = 0; k < 5; ++k) newton_step(false);
  }

  int grow_streak = 0;
  double prev_res = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.newton_max; ++it) {
    auto [res, step] = newton_step(true);
    sol.residual_history.push_back(res);
    sol.outer_iterations = it;
    if (opt.log)
      *opt.log << "newton iter=" << it << " residual=" << res << " step=" << step << "\n";
    if (res <= opt.newton_tol) return sol;
    double xscale = 1.0 + sol.y.coeffs.norm() + sol.z.coeffs.norm();
    if (step <= 1e-13 * xscale) {
      if (res <= 1e-7) return sol;  // stagnated at solver accuracy
      break;
    }
    grow_streak = (res > prev_res) ? grow_streak + 1 : 0;
    prev_res = res;
    if (grow_streak >= 5) {
      if (opt.log) *opt.log << "newton fallback=picard steps=10\n";
      for (int k = 0; k < 10; ++k) newton_step(false);
      grow_streak = 0;
      prev_res = std::numeric_limits<double>::infinity();
    }
  }
  double res = current_residual();
  if (res <= opt.newton_tol) return sol;
  std::ostringstream os;
  os << "newton_semidiscrete: no convergence (residual " << res << " after "
     << sol.outer_iterations << " iterations)";
  throw std::runtime_error(os.str());
}

double kkt_violation(const FemSetup& fem, const OptimalitySolution& sol,
                     const ProblemData& data) {
  const DofMap& vmap = *fem.vmap;
  double worst = 0.0;
  for (int i = 0; i < vmap.n_dofs; ++i) {
    int comp = i / vmap.n_scalar_nodes;
    double u = sol.u.coeffs(i);
    double d = sol.z.coeffs(i) + data.alpha * u;
    double tol_bound = 1e-10 * (1.0 + std::abs(data.a(comp)) + std::abs(data.b(comp)));
    double v;
    if (u <= data.a(comp) + tol_bound) v = std::max(0.0, -d);
    else if (u >= data.b(comp) - tol_bound) v = std::max(0.0, d);
    else v = std::abs(d);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace nsopt
