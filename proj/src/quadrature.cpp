#include "nsopt/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace nsopt {

namespace {

// Golub-Welsch: nodes/weights of the Gauss rule for the weight whose
// orthogonal-polynomial recurrence coefficients are (alpha_k, beta_k):
//   p_{k+1} = (x - alpha_k) p_k - beta_k p_{k-1},   mu0 = integral of the weight.
void golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta,
                  double mu0, std::vector<double>& nodes, std::vector<double>& weights) {
  int n = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = alpha[i];
    if (i + 1 < n) {
      double b = std::sqrt(beta[i + 1]);
      J(i, i + 1) = b;
      J(i + 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(i);
    double v0 = es.eigenvectors()(0, i);
    weights[i] = mu0 * v0 * v0;
  }
}

// Gauss-Legendre on [-1,1] mapped to [0,1].
void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
  std::vector<double> alpha(n, 0.0), beta(n, 0.0);
  for (int k = 1; k < n; ++k) {
    double kk = static_cast<double>(k);
    beta[k] = kk * kk / (4.0 * kk * kk - 1.0);
  }
  golub_welsch(alpha, beta, 2.0, x, w);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (x[i] + 1.0);
    w[i] *= 0.5;
  }
}

// Gauss-Jacobi with weight (1-x) on [-1,1] (alpha=1, beta=0), mapped to [0,1]
// with weight (1-v); the extra factor 1/2 from dv and 1/2 from (1-x)/2 give
// node v=(x+1)/2 and weight w/4.
void gauss_jacobi10_01(int n, std::vector<double>& x, std::vector<double>& w) {
  const double a = 1.0, b = 0.0;
  std::vector<double> alpha(n), beta(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double kk = static_cast<double>(k);
    double den = (2.0 * kk + a + b) * (2.0 * kk + a + b + 2.0);
    alpha[k] = (b * b - a * a) / den;
  }
  for (int k = 1; k < n; ++k) {
    double kk = static_cast<double>(k);
    double num = 4.0 * kk * (kk + a) * (kk + b) * (kk + a + b);
    double den = (2.0 * kk + a + b) * (2.0 * kk + a + b) *
                 (2.0 * kk + a + b + 1.0) * (2.0 * kk + a + b - 1.0);
    beta[k] = num / den;
  }
  double mu0 = 2.0;  // integral of (1-x) over [-1,1]
  golub_welsch(alpha, beta, mu0, x, w);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (x[i] + 1.0);
    w[i] *= 0.25;
  }
}

}  // namespace

QuadratureRule make_rule(int degree) {
  if (degree < 1 || degree > 19)
    throw std::invalid_argument("make_rule: unsupported degree " + std::to_string(degree));
  int n = (degree + 2) / 2;  // 2n-1 >= degree
  std::vector<double> xu, wu, xv, wv;
  gauss_legendre_01(n, xu, wu);
  gauss_jacobi10_01(n, xv, wv);

  QuadratureRule rule;
  rule.degree = degree;
  rule.points.reserve(n * n);
  rule.weights.reserve(n * n);
  // Collapsed map: x = u(1-v), y = v; Jacobian (1-v) is the Jacobi weight.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double x = xu[j] * (1.0 - xv[i]);
      double y = xv[i];
      rule.points.push_back({1.0 - x - y, x, y});
      rule.weights.push_back(wu[j] * wv[i]);
    }
  }
  return rule;
}

LineRule make_line_rule(int n) {
  if (n < 1 || n > 30) throw std::invalid_argument("make_line_rule: bad point count");
  LineRule r;
  gauss_legendre_01(n, r.points, r.weights);
  return r;
}

}  // namespace nsopt
