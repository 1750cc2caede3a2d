#pragma once

#include <array>
#include <vector>

namespace nsopt {

// Quadrature on the reference triangle {x >= 0, y >= 0, x + y <= 1}.
// Points stored as barycentric triples (l0, l1, l2) with l0 = 1 - x - y.
struct QuadratureRule {
  int degree = 0;  // maximal total polynomial degree integrated exactly
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;  // sum to 1/2 (reference triangle area)

  int size() const { return static_cast<int>(points.size()); }
};

// Conical-product Gauss rule exact for total degree `degree` (1..19).
QuadratureRule make_rule(int degree);

// Gauss-Legendre rule on [0,1] with n points (exact degree 2n-1).
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights;
  int size() const { return static_cast<int>(points.size()); }
};
LineRule make_line_rule(int n);

}  // namespace nsopt
