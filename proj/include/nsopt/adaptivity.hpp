#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nsopt/estimators.hpp"
#include "nsopt/manufactured.hpp"
#include "nsopt/reporting.hpp"
#include "nsopt/solvers.hpp"

namespace nsopt {

struct LoopConfig {
  Scheme scheme = Scheme::FullyDiscrete;
  QuadVariant variant = QuadVariant::S19;
  double marking_fraction = 0.5;  // strict threshold vs the max squared indicator
  bool uniform = false;           // mark every cell instead of threshold marking
  long long max_ndof = 50000;
  int max_iters = 30;
  SolverOptions solver;
  // Called after each iteration with the indicator set used for marking.
  std::function<void(int iter, const FemSetup& fem, const OptimalitySolution& sol,
                     const std::vector<IndicatorField>& indicators)>
      on_iteration;
};

struct LoopResult {
  std::vector<ConvergenceRecord> records;
  std::string failure;  // empty on clean termination
  Mesh final_mesh;
};

// Cells whose squared indicator strictly exceeds fraction * max. Empty iff
// all indicators vanish.
std::vector<int> mark(const IndicatorField& indicators, double fraction);

// Solve - estimate - mark - refine with prolongation warm starts.
LoopResult run_loop(const Benchmark& bm, const LoopConfig& cfg);

// Nodal interpolation of a field onto a refinement of its mesh (via the
// ancestor map of one refine() step).
FEField prolong(const Mesh& old_mesh, const FEField& f, const Mesh& new_mesh,
                std::shared_ptr<const DofMap> new_map);

// Ndof per the benchmark counting rule: fully 2[dimV + dimP] + dimU,
// semi-discrete 2[dimV + dimP].
long long count_ndof(const FemSetup& fem, Scheme scheme);

}  // namespace nsopt
