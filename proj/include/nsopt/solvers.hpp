#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "nsopt/assembly.hpp"
#include "nsopt/mesh.hpp"
#include "nsopt/quadrature.hpp"
#include "nsopt/spaces.hpp"

namespace nsopt {

enum class Scheme { FullyDiscrete, SemiDiscrete };
enum class QuadVariant { S19, S5, S5c };

struct ProblemData {
  double nu = 1.0;
  double alpha = 1.0;
  Eigen::Vector2d a{-1e100, -1e100};  // lower control bounds (componentwise)
  Eigen::Vector2d b{1e100, 1e100};    // upper control bounds
  VecFn f;           // extra momentum source (null = zero)
  VecFn y_omega;     // desired state
  VecFn state_bc;    // Dirichlet data for the velocity (null = zero)
  VecFn adjoint_bc;  // Dirichlet data for the adjoint velocity (null = zero)
};

struct OptimalitySolution {
  Scheme scheme = Scheme::FullyDiscrete;
  FEField y, p, z, r;
  FEField u;  // fully discrete control; unused (empty) for semi-discrete
  int outer_iterations = 0;
  std::vector<double> residual_history;
};

// DOF maps shared by all solves on one mesh.
struct FemSetup {
  const Mesh* mesh = nullptr;
  std::shared_ptr<const DofMap> vmap;  // continuous vector P2 (velocity/adjoint/control)
  std::shared_ptr<const DofMap> pmap;  // continuous P1 pressure
};
FemSetup make_setup(const Mesh& mesh);

struct SolverOptions {
  double picard_tol = 1e-11;   // H1 increment
  int picard_max = 50;
  double newton_tol = 1e-10;   // Euclidean residual of the coupled system
  int newton_max = 60;
  int active_set_max = 30;
  std::ostream* log = nullptr;  // structured per-iteration lines when set
};

struct SmallnessReport {
  double C_b = 0.0;
  double C_2 = 0.0;
  double M_ad = 0.0;       // L2 norm of the componentwise max(|a|,|b|) bound
  double theta = 0.0;      // C_b * C_2 * M_ad / nu^2
  bool satisfied = false;  // theta < 1
};
SmallnessReport check_smallness(const ProblemData& data, double domain_measure);

// Direct solve of a Stokes-type saddle system with the zero-mean Lagrange
// multiplier row appended. Returns velocity and pressure coefficient vectors.
std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_saddle(const SaddleSystem& sys);

// Picard (Oseen) iteration for the state equation with momentum load
// (f + u, v) pre-assembled into `load`.
std::pair<FEField, FEField> solve_state(const FemSetup& fem, const ProblemData& data,
                                        const Eigen::VectorXd& load,
                                        const SolverOptions& opt = {},
                                        const FEField* warm_y = nullptr);

// Linearized adjoint solve about the frozen state y with RHS (y - y_omega, w).
std::pair<FEField, FEField> solve_adjoint(const FemSetup& fem, const ProblemData& data,
                                          const FEField& y, const SolverOptions& opt = {});

// Componentwise clamp of -z/alpha into [a,b] at the control nodes.
FEField project_control(const FEField& z, double alpha, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b);
Eigen::Vector2d clamp_control(const Eigen::Vector2d& minus_z_over_alpha,
                              const Eigen::Vector2d& a, const Eigen::Vector2d& b);

// Primal-dual active set method for the fully discrete scheme.
OptimalitySolution active_set_solve(const FemSetup& fem, const ProblemData& data,
                                    const SolverOptions& opt = {},
                                    const OptimalitySolution* warm = nullptr);

// Semismooth Newton for the semi-discrete (variational discretization) scheme.
OptimalitySolution newton_semidiscrete(const FemSetup& fem, const ProblemData& data,
                                       QuadVariant variant = QuadVariant::S19,
                                       const SolverOptions& opt = {},
                                       const OptimalitySolution* warm = nullptr);

// Pointwise semi-discrete control at a barycentric point of a cell.
Eigen::Vector2d semi_control(const Mesh& mesh, const FEField& z, const ProblemData& data,
                             int cell, const std::array<double, 3>& bary);

// Max KKT violation of the fully discrete variational inequality at control
// nodes: active nodes must have the correct multiplier sign, inactive nodes
// |z + alpha u| below tolerance.
double kkt_violation(const FemSetup& fem, const OptimalitySolution& sol,
                     const ProblemData& data);

// Cells where the inactive-set indicator is non-constant across the points of
// the degree-5 rule (the composed-rule "kink elements").
std::vector<char> detect_kink_cells(const FemSetup& fem, const FEField& z,
                                    const ProblemData& data);

// Control load (g(z), v) and semismooth derivative D = [chi_c phi_i phi_j]
// with the per-variant quadrature.
struct ControlTerm {
  Eigen::VectorXd load;
  SpMat indicator_mass;  // multiply by 1/alpha for the Jacobian block
};
ControlTerm assemble_control_term(const FemSetup& fem, const FEField& z,
                                  const ProblemData& data, QuadVariant variant);

}  // namespace nsopt
