#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

#include "nsopt/mesh.hpp"
#include "nsopt/solvers.hpp"
#include "nsopt/spaces.hpp"

namespace nsopt {

enum class IndicatorKind {
  State,
  Adjoint,
  Control,
  Combined,
  SemiState,
  SemiAdjoint,
  SemiCombined,
  Oscillation,
};

// Per-cell squared indicator values.
struct IndicatorField {
  IndicatorKind kind;
  const Mesh* mesh = nullptr;
  Eigen::VectorXd values;

  double total_sq() const { return values.sum(); }
  double total() const;
};

// Control evaluated at a barycentric point of a cell (u_T for the fully
// discrete scheme, clamp(-z/alpha) for the semi-discrete one).
using ControlAt = std::function<Eigen::Vector2d(int cell, const std::array<double, 3>& bary)>;

// Separate volume / divergence / jump contributions (each squared per cell).
struct EstimatorParts {
  Eigen::VectorXd volume;
  Eigen::VectorXd divergence;
  Eigen::VectorXd jump;
  Eigen::VectorXd total() const { return volume + divergence + jump; }
};

// State estimator: per cell
//   h_T^2 ||f + u + nu Lap y - (y.grad)y - grad p||_T^2 + ||div y||_T^2
//   + h_T ||[[(nu grad y - p I) n]]||_{dT \ dOmega}^2,
// with each interior-edge jump charged in full to both adjacent cells.
EstimatorParts est_state_parts(const FemSetup& fem, const FEField& y, const FEField& p,
                               const ProblemData& data, const ControlAt& control);
IndicatorField est_state(const FemSetup& fem, const OptimalitySolution& sol,
                         const ProblemData& data);

// Adjoint estimator: volume residual y - y_omega + nu Lap z - (grad y)^T z
// + (y.grad) z - grad r, flux nu grad z - r I.
EstimatorParts est_adjoint_parts(const FemSetup& fem, const FEField& y, const FEField& z,
                                 const FEField& r, const ProblemData& data);
IndicatorField est_adjoint(const FemSetup& fem, const OptimalitySolution& sol,
                           const ProblemData& data);

// Control estimator ||clamp(-z/alpha) - u_T||_T^2; fully discrete only.
IndicatorField est_control(const FemSetup& fem, const OptimalitySolution& sol,
                           const ProblemData& data);

// Cellwise sum of squares. All parts must live on the same mesh.
IndicatorField combine(const std::vector<IndicatorField>& parts);

// Oscillation osc_T(g)^2 = h_T^2 ||g - Pi_T g||_T^2 (Pi_T the elementwise L2
// projection onto quadratics); zero outside `subset` when non-empty.
IndicatorField oscillation(const Mesh& mesh,
                           const std::function<Eigen::VectorXd(Vec2)>& g, int n_components,
                           const std::vector<int>& subset = {});

std::array<double, 3> xy_to_bary(const Mesh& mesh, int cell, Vec2 x);

}  // namespace nsopt
