#include "nsopt/adaptivity.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace nsopt {

std::vector<int> mark(const IndicatorField& indicators, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("mark: fraction must lie in (0,1]");
  if (indicators.values.size() == 0) return {};
  double mx = indicators.values.maxCoeff();
  std::vector<int> out;
  if (mx <= 0.0) return out;
  // Strict threshold test; argmax cells always qualify (so fraction = 1.0
  // marks exactly the cells attaining the maximum).
  for (int c = 0; c < indicators.values.size(); ++c)
    if (indicators.values(c) > fraction * mx || indicators.values(c) == mx) out.push_back(c);
  return out;
}

FEField prolong(const Mesh& old_mesh, const FEField& f, const Mesh& new_mesh,
                std::shared_ptr<const DofMap> new_map) {
  FEField out = make_field(new_map);
  std::vector<char> done(new_map->n_scalar_nodes, 0);
  const bool vec = new_map->n_components == 2;
  for (int c = 0; c < new_mesh.n_cells(); ++c) {
    int a = new_mesh.ancestor[c];
    for (int k = 0; k < new_map->local_size(); ++k) {
      int node = new_map->cell_nodes[c][k];
      if (done[node]) continue;
      done[node] = 1;
      auto bary = xy_to_bary(old_mesh, a, new_map->node_coords[node]);
      if (vec) {
        Eigen::Vector2d v = eval_vec(old_mesh, f, a, bary);
        out.coeffs(new_map->dof(0, node)) = v(0);
        out.coeffs(new_map->dof(1, node)) = v(1);
      } else {
        out.coeffs(new_map->dof(0, node)) = eval_scalar(old_mesh, f, a, bary);
      }
    }
  }
  return out;
}

long long count_ndof(const FemSetup& fem, Scheme scheme) {
  long long v = fem.vmap->n_dofs, p = fem.pmap->n_dofs;
  long long n = 2 * (v + p);
  if (scheme == Scheme::FullyDiscrete) n += v;  // the discrete control space
  return n;
}

LoopResult run_loop(const Benchmark& bm, const LoopConfig& cfg) {
  LoopResult result;
  auto mesh = std::make_unique<Mesh>(bm.initial_mesh);
  std::unique_ptr<Mesh> prev_mesh;
  OptimalitySolution prev_sol;
  bool have_prev = false;

  for (int iter = 0;; ++iter) {
    auto t0 = std::chrono::steady_clock::now();
    FemSetup fem = make_setup(*mesh);

    OptimalitySolution warm;
    if (have_prev) {
      warm.scheme = cfg.scheme;
      warm.y = prolong(*prev_mesh, prev_sol.y, *mesh, fem.vmap);
      warm.p = prolong(*prev_mesh, prev_sol.p, *mesh, fem.pmap);
      warm.z = prolong(*prev_mesh, prev_sol.z, *mesh, fem.vmap);
      warm.r = prolong(*prev_mesh, prev_sol.r, *mesh, fem.pmap);
      if (cfg.scheme == Scheme::FullyDiscrete)
        warm.u = prolong(*prev_mesh, prev_sol.u, *mesh, fem.vmap);
    }

    OptimalitySolution sol;
    std::vector<IndicatorField> inds;
    try {
      if (cfg.scheme == Scheme::FullyDiscrete)
        sol = active_set_solve(fem, bm.data, cfg.solver, have_prev ? &warm : nullptr);
      else
        sol = newton_semidiscrete(fem, bm.data, cfg.variant, cfg.solver,
                                  have_prev ? &warm : nullptr);

      inds.push_back(est_state(fem, sol, bm.data));
      inds.push_back(est_adjoint(fem, sol, bm.data));
      if (cfg.scheme == Scheme::FullyDiscrete) inds.push_back(est_control(fem, sol, bm.data));
    } catch (const std::exception& e) {
      result.failure = e.what();
      result.final_mesh = *mesh;
      return result;
    }
    IndicatorField combined = combine(inds);
    inds.push_back(combined);

    ErrorBundle err = exact_errors(fem, sol, bm.exact, bm.data);

    ConvergenceRecord rec;
    rec.iter = iter;
    rec.ndof = count_ndof(fem, cfg.scheme);
    rec.est_st = inds[0].total_sq();
    rec.est_ad = inds[1].total_sq();
    rec.est_ct = cfg.scheme == Scheme::FullyDiscrete ? inds[2].total_sq() : 0.0;
    rec.est_ocp = combined.total();
    rec.err_y_h1 = err.y_h1;
    rec.err_p_l2 = err.p_l2;
    rec.err_z_h1 = err.z_h1;
    rec.err_r_l2 = err.r_l2;
    rec.err_u_l2 = err.u_l2;
    rec.err_total = err.total();
    rec.effectivity = rec.err_total > 0.0 ? rec.est_ocp / rec.err_total : 0.0;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);

    if (cfg.on_iteration) cfg.on_iteration(iter, fem, sol, inds);

    if (iter + 1 >= cfg.max_iters || rec.ndof >= cfg.max_ndof) break;

    std::vector<int> marked;
    if (cfg.uniform) {
      marked.resize(mesh->n_cells());
      for (int c = 0; c < mesh->n_cells(); ++c) marked[c] = c;
    } else {
      marked = mark(combined, cfg.marking_fraction);
    }
    if (marked.empty()) break;  // estimator identically zero: converged

    auto next = std::make_unique<Mesh>(refine(*mesh, marked));
    prev_mesh = std::move(mesh);
    mesh = std::move(next);
    prev_sol = std::move(sol);
    have_prev = true;
  }
  result.final_mesh = *mesh;
  return result;
}

}  // namespace nsopt
