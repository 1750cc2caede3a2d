#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "nsopt/assembly.hpp"
#include "nsopt/manufactured.hpp"
#include "nsopt/quadrature.hpp"
#include "nsopt/solvers.hpp"

using namespace nsopt;

namespace {

double control_l2(const FemSetup& fem, const FEField& z, const ProblemData& data) {
  QuadratureRule rule = make_rule(19);
  double s = 0.0;
  for (int c = 0; c < fem.mesh->n_cells(); ++c) {
    CellMap cm = cell_map(*fem.mesh, c);
    for (int q = 0; q < rule.size(); ++q)
      s += rule.weights[q] * cm.det *
           semi_control(*fem.mesh, z, data, c, rule.points[q]).squaredNorm();
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("solve_saddle: zero data, polynomial Stokes reproduction, residual contract") {
  Benchmark bm = poly2d();
  const Mesh& mesh = bm.initial_mesh;
  FemSetup fem = make_setup(mesh);

  SaddleSystem sys;
  sys.n_v = fem.vmap->n_dofs;
  sys.n_p = fem.pmap->n_dofs;
  sys.A = assemble_viscous(mesh, *fem.vmap, 1.0);
  sys.B = assemble_divergence(mesh, *fem.vmap, *fem.pmap);
  sys.m = pressure_integral_vector(mesh, *fem.pmap);
  sys.rhs_momentum = Eigen::VectorXd::Zero(sys.n_v);
  sys.rhs_mass = Eigen::VectorXd::Zero(sys.n_p);
  for (int n : fem.vmap->boundary_nodes)
    for (int c = 0; c < 2; ++c) sys.dirichlet.emplace_back(fem.vmap->dof(c, n), 0.0);

  SUBCASE("zero right-hand side gives the zero solution") {
    auto [u, p] = solve_saddle(sys);
    CHECK(u.lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(p.lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  SUBCASE("Stokes with y=(x^2,-2xy), p=x+y-1 reproduced nodally") {
    VecFn yex = [](Vec2 v) { return Eigen::Vector2d(v.x * v.x, -2.0 * v.x * v.y); };
    ScalarFn pex = [](Vec2 v) { return v.x + v.y - 1.0; };
    // f = -Lap y + grad p = (-2, 0) + (1, 1).
    VecFn f = [](Vec2) { return Eigen::Vector2d(-1.0, 1.0); };
    sys.rhs_momentum = assemble_load(mesh, *fem.vmap, f, make_rule(19));
    sys.dirichlet = dirichlet_values(*fem.vmap, yex);
    auto [u, p] = solve_saddle(sys);
    FEField yi = interpolate(fem.vmap, yex);
    FEField pi = interpolate(fem.pmap, pex);
    // Discrete pressure is mean-zero; compare modulo the mean of the exact one.
    double pmean = pressure_integral_vector(mesh, *fem.pmap).dot(pi.coeffs) / mesh.total_area();
    CHECK((u - yi.coeffs).lpNorm<Eigen::Infinity>() <= 1e-9);
    Eigen::VectorXd pshift = pi.coeffs.array() - pmean;
    CHECK((p - pshift).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(std::abs(pressure_integral_vector(mesh, *fem.pmap).dot(p)) <= 1e-10);
  }

  SUBCASE("linear residual on a random right-hand side") {
    std::mt19937 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd rmom(sys.n_v);
    for (int i = 0; i < sys.n_v; ++i) rmom(i) = g(rng);
    for (auto [d, v] : sys.dirichlet) rmom(d) = v;
    sys.rhs_momentum = rmom;
    auto [u, p] = solve_saddle(sys);
    // Momentum rows away from Dirichlet dofs.
    // Momentum block: A u - B^T p (the weak form carries -(p, div v)).
    Eigen::VectorXd res = sys.A * u - SpMat(sys.B.transpose()) * p - rmom;
    std::vector<char> constrained(sys.n_v, 0);
    for (auto [d, v] : sys.dirichlet) constrained[d] = 1;
    double rmax = 0.0;
    for (int i = 0; i < sys.n_v; ++i)
      if (!constrained[i]) rmax = std::max(rmax, std::abs(res(i)));
    CHECK(rmax <= 1e-10 * rmom.norm());
    // Mass rows equal a multiple of the mean-constraint vector.
    Eigen::VectorXd rmass = sys.B * u;
    double lam = sys.m.dot(rmass) / sys.m.dot(sys.m);
    CHECK((rmass - lam * sys.m).lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + rmom.norm()));
    CHECK(std::abs(sys.m.dot(p)) <= 1e-10);
  }
}

TEST_CASE("solve_state: trivial and polynomial reproduction") {
  Benchmark bm = poly2d();
  FemSetup fem = make_setup(bm.initial_mesh);

  SUBCASE("no forcing, homogeneous boundary data gives zero") {
    ProblemData data;  // null f and boundary data mean zero
    Eigen::VectorXd load = Eigen::VectorXd::Zero(fem.vmap->n_dofs);
    auto [y, p] = solve_state(fem, data, load);
    CHECK(y.coeffs.lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(p.coeffs.lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  SUBCASE("manufactured polynomial state reproduced") {
    // Momentum load (f + u, v) with u the exact control clamp(-z/alpha).
    VecFn fu = [&](Vec2 v) {
      return (bm.data.f(v) +
              clamp_control(-bm.exact.z(v) / bm.data.alpha, bm.data.a, bm.data.b))
          .eval();
    };
    Eigen::VectorXd load = assemble_load(*fem.mesh, *fem.vmap, fu, make_rule(19));
    auto [y, p] = solve_state(fem, bm.data, load);
    FEField yi = interpolate(fem.vmap, bm.exact.y);
    CHECK((y.coeffs - yi.coeffs).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(std::abs(integral(*fem.mesh, p)) <= 1e-10);
  }
}

TEST_CASE("solve_adjoint: zero right-hand side and mean-zero multiplier pressure") {
  Benchmark bm = poly2d();
  FemSetup fem = make_setup(bm.initial_mesh);
  VecFn fu = [&](Vec2 v) {
    return (bm.data.f(v) + clamp_control(-bm.exact.z(v) / bm.data.alpha, bm.data.a, bm.data.b))
        .eval();
  };
  Eigen::VectorXd load = assemble_load(*fem.mesh, *fem.vmap, fu, make_rule(19));
  ProblemData data = bm.data;
  auto [y, p] = solve_state(fem, data, load);
  (void)p;
  // Set the desired state to the computed y itself: the adjoint RHS vanishes.
  FEField ycopy = y;
  data.y_omega = [&fem, &ycopy](Vec2 v) {
    // Nodal agreement suffices: evaluate the discrete field itself.
    for (int c = 0; c < fem.mesh->n_cells(); ++c) {
      auto bary = xy_to_bary(*fem.mesh, c, v);
      if (bary[0] >= -1e-12 && bary[1] >= -1e-12 && bary[2] >= -1e-12)
        return eval_vec(*fem.mesh, ycopy, c, bary);
    }
    return Eigen::Vector2d::Zero().eval();
  };
  data.adjoint_bc = nullptr;
  auto [z, r] = solve_adjoint(fem, data, y);
  CHECK(z.coeffs.lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(r.coeffs.lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("clamp and projection") {
  Eigen::Vector2d a(-2.0, -2.0), b(2.0, 2.0);
  CHECK(clamp_control(Eigen::Vector2d(3.0, 3.0), a, b) == Eigen::Vector2d(2.0, 2.0));
  CHECK(clamp_control(Eigen::Vector2d(-5.0, 0.7), a, b) == Eigen::Vector2d(-2.0, 0.7));
  // Idempotence and admissibility on random samples.
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::Vector2d x(u(rng), u(rng));
    Eigen::Vector2d c1 = clamp_control(x, a, b);
    CHECK(clamp_control(c1, a, b) == c1);
    CHECK(c1(0) >= a(0));
    CHECK(c1(1) <= b(1));
  }
  // project_control of z = 0 is 0 for bounds straddling zero.
  Benchmark bm = poly2d();
  FemSetup fem = make_setup(bm.initial_mesh);
  FEField z0 = make_field(fem.vmap);
  FEField u0 = project_control(z0, 1.0, a, b);
  CHECK(u0.coeffs.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("scheme agreement with non-binding bounds, and the a=b=0 degenerate case") {
  Benchmark bm = poly2d();  // bounds are wide; the clamp never binds
  FemSetup fem = make_setup(bm.initial_mesh);

  OptimalitySolution fully = active_set_solve(fem, bm.data);
  OptimalitySolution semi = newton_semidiscrete(fem, bm.data);

  // Both reproduce the exact polynomial quintuple.
  ErrorBundle ef = exact_errors(fem, fully, bm.exact, bm.data);
  ErrorBundle es = exact_errors(fem, semi, bm.exact, bm.data);
  CHECK(ef.total() <= 1e-8);
  CHECK(es.total() <= 1e-8);
  CHECK(std::abs(ef.total() - es.total()) <= 1e-8);

  // Unconstrained identity u = -z/alpha at the control nodes.
  for (int i = 0; i < fully.u.coeffs.size(); ++i)
    CHECK(fully.u.coeffs(i) ==
          doctest::Approx(-fully.z.coeffs(i) / bm.data.alpha).epsilon(1e-10));

  // Mean-zero pressures.
  CHECK(std::abs(integral(*fem.mesh, fully.p)) <= 1e-10);
  CHECK(std::abs(integral(*fem.mesh, fully.r)) <= 1e-10);
  CHECK(std::abs(integral(*fem.mesh, semi.p)) <= 1e-10);
  CHECK(std::abs(integral(*fem.mesh, semi.r)) <= 1e-10);

  // KKT residual of the fully discrete variational inequality.
  CHECK(kkt_violation(fem, fully, bm.data) <= 1e-8);

  SUBCASE("a = b = 0 forces u = 0") {
    ProblemData data = bm.data;
    data.a.setZero();
    data.b.setZero();
    OptimalitySolution sol = active_set_solve(fem, data);
    CHECK(sol.u.coeffs.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("Newton on the semi-discrete system: residual history") {
  Benchmark bm = example1(1.0);  // alpha = 1 gives a genuinely clamped control
  FemSetup fem = make_setup(bm.initial_mesh);
  OptimalitySolution sol = newton_semidiscrete(fem, bm.data);
  const auto& hist = sol.residual_history;
  REQUIRE(hist.size() >= 1);
  CHECK(hist.back() <= 1e-10);
  for (std::size_t k = hist.size() >= 3 ? hist.size() - 3 : 0; k + 1 < hist.size(); ++k)
    CHECK(hist[k + 1] <= hist[k]);
  // The recovered control is the pointwise clamp of -z/alpha by construction.
  QuadratureRule rule = make_rule(5);
  for (int c = 0; c < fem.mesh->n_cells(); ++c)
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::Vector2d g = semi_control(*fem.mesh, sol.z, bm.data, c, rule.points[q]);
      auto bary = rule.points[q];
      Eigen::Vector2d zz = eval_vec(*fem.mesh, sol.z, c, bary);
      CHECK((g - clamp_control(-zz / bm.data.alpha, bm.data.a, bm.data.b)).norm() <= 1e-12);
    }
}

TEST_CASE("example 1 at alpha = 1e-4: the control saturates the upper bound") {
  Benchmark bm = example1();
  FemSetup fem = make_setup(bm.initial_mesh);
  OptimalitySolution sol = active_set_solve(fem, bm.data);
  CHECK(sol.outer_iterations <= 10);
  int at_bound = 0;
  for (int i = 0; i < sol.u.coeffs.size(); ++i)
    if (std::abs(sol.u.coeffs(i) - 2.0) <= 1e-12) ++at_bound;
  CHECK(at_bound > 0);
  CHECK(at_bound == sol.u.coeffs.size());  // -z/alpha >> b everywhere at this alpha
  CHECK(kkt_violation(fem, sol, bm.data) <= 1e-8);
}

TEST_CASE("quadrature variants: S19 versus S5c control norms differ below 1%") {
  Benchmark bm = example1(1.0);
  Mesh mesh = bm.initial_mesh;
  for (int i = 0; i < 2; ++i) {
    std::vector<int> all(mesh.n_cells());
    for (int c = 0; c < mesh.n_cells(); ++c) all[c] = c;
    mesh = refine(mesh, all);
  }
  FemSetup fem = make_setup(mesh);
  OptimalitySolution s19 = newton_semidiscrete(fem, bm.data, QuadVariant::S19);
  OptimalitySolution s5c = newton_semidiscrete(fem, bm.data, QuadVariant::S5c);
  double n19 = control_l2(fem, s19.z, bm.data);
  double n5c = control_l2(fem, s5c.z, bm.data);
  CHECK(std::abs(n19 - n5c) <= 0.01 * n19);
}

TEST_CASE("kink-cell detection") {
  Benchmark bm = poly2d();
  FemSetup fem = make_setup(bm.initial_mesh);

  // Wide bounds: the clamp is inactive everywhere, no kinks.
  FEField z = interpolate(fem.vmap, VecFn([](Vec2 v) {
    return Eigen::Vector2d(3.0 * (v.x - 0.5), 0.0);
  }));
  ProblemData wide = bm.data;
  auto none = detect_kink_cells(fem, z, wide);
  int n_none = 0;
  for (char c : none) n_none += c;
  CHECK(n_none == 0);

  // Bounds +-1 with -z/alpha = -3(x-0.5) sweeping [-1.5, 1.5]: the clamp
  // boundary crosses the domain interior, so kink cells must appear.
  ProblemData tight = bm.data;
  tight.alpha = 1.0;
  tight.a = {-1.0, -1.0};
  tight.b = {1.0, 1.0};
  auto some = detect_kink_cells(fem, z, tight);
  int n_some = 0;
  for (char c : some) n_some += c;
  CHECK(n_some > 0);
  CHECK(n_some < fem.mesh->n_cells());
}

TEST_CASE("smallness report: closed-form constants") {
  ProblemData data;
  data.nu = 1.0;
  data.a = {-2.0, -2.0};
  data.b = {2.0, 2.0};
  SmallnessReport rep = check_smallness(data, 3.0);
  CHECK(rep.C_b == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
  CHECK(rep.C_2 == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));
  CHECK(rep.theta == doctest::Approx(rep.C_b * rep.C_2 * rep.M_ad).epsilon(1e-12));

  data.nu = 1e6;
  SmallnessReport big = check_smallness(data, 3.0);
  CHECK(big.theta < 1e-9);
  CHECK(big.satisfied);
}
