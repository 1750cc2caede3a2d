#pragma once

#include <Eigen/Sparse>

#include <utility>
#include <vector>

#include "nsopt/mesh.hpp"
#include "nsopt/quadrature.hpp"
#include "nsopt/spaces.hpp"

namespace nsopt {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// All operator terms are integrated with a fixed degree-6 rule (exact for any
// P2/P1 product with one gradient); analytic right-hand sides take a caller
// supplied high-degree rule.
constexpr int kAssemblyDegree = 6;

// nu * (grad u, grad v) on the vector P2 space.
SpMat assemble_viscous(const Mesh& mesh, const DofMap& vmap, double nu);

// (u, v) on the vector P2 space.
SpMat assemble_mass(const Mesh& mesh, const DofMap& vmap);

// Convection about a frozen field w:
//   N1[(c,i),(c,j)]  = ((w . grad) phi_j, phi_i)   per component  [b(w; u, v)]
//   N2[(d,i),(c,j)]  = (phi_j dw_d/dx_c, phi_i)                   [b(u; w, v)]
std::pair<SpMat, SpMat> assemble_convection(const Mesh& mesh, const DofMap& vmap,
                                            const FEField& w);

// Linearization blocks of the adjoint convection terms about (y, z), used by
// the coupled Newton solve; both map a velocity perturbation to adjoint tests:
//   G1[(d,i),(c,j)] = (phi_j dphi_i/dx_c, z_d)   [b(dy; w, z) w.r.t. dy]
//   G2[(d,i),(c,j)] = (phi_i dphi_j/dx_d, z_c)   [b(w; dy, z) w.r.t. dy]
std::pair<SpMat, SpMat> assemble_adjoint_coupling(const Mesh& mesh, const DofMap& vmap,
                                                  const FEField& z);

// B[q,(c,j)] = (q, d phi_j / dx_c): pressure tests against velocity divergence.
SpMat assemble_divergence(const Mesh& mesh, const DofMap& vmap, const DofMap& pmap);

// m with m . p = integral of p (P1).
Eigen::VectorXd pressure_integral_vector(const Mesh& mesh, const DofMap& pmap);

// (f, v) for analytic f with the given rule.
Eigen::VectorXd assemble_load(const Mesh& mesh, const DofMap& vmap, const VecFn& f,
                              const QuadratureRule& rule);

// Replace constrained rows by identity and fold constrained columns into rhs.
// `bc` maps dof index -> prescribed value.
void eliminate_dirichlet(std::vector<Triplet>& trips, Eigen::VectorXd& rhs,
                         const std::vector<std::pair<int, double>>& bc, int n);

// Stokes-type saddle system: unknowns (u, p, lam) where lam enforces the
// zero pressure mean; layout [0, nV) velocity, [nV, nV+nP) pressure, last row
// the mean constraint.
struct SaddleSystem {
  int n_v = 0;
  int n_p = 0;
  SpMat A;               // velocity block (viscous + convective terms)
  SpMat B;               // divergence coupling
  Eigen::VectorXd m;     // pressure mean constraint row
  Eigen::VectorXd rhs_momentum;
  Eigen::VectorXd rhs_mass;
  std::vector<std::pair<int, double>> dirichlet;  // velocity dof -> value
};

// Nodal interpolation of g on boundary velocity DOFs (both components).
std::vector<std::pair<int, double>> dirichlet_values(const DofMap& vmap, const VecFn& g);

}  // namespace nsopt
