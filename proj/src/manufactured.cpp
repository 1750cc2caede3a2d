#include "nsopt/manufactured.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace nsopt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// The angular profile of the stream function and its first four derivatives.
struct Psi {
  double d[5];
};

struct Angular {
  double sigma;
  double gamma;
  Psi psi(double th) const {
    const double s1 = 1.0 + sigma, s2 = sigma - 1.0;
    const double cg = std::cos(gamma * sigma);
    const double sn1 = std::sin(s1 * th), cs1 = std::cos(s1 * th);
    const double sn2 = std::sin(s2 * th), cs2 = std::cos(s2 * th);
    Psi p;
    p.d[0] = (sn1 / s1 + sn2 / s2) * cg - cs1 + cs2;
    p.d[1] = (cs1 + cs2) * cg + s1 * sn1 - s2 * sn2;
    p.d[2] = (-s1 * sn1 - s2 * sn2) * cg + s1 * s1 * cs1 - s2 * s2 * cs2;
    p.d[3] = (-s1 * s1 * cs1 - s2 * s2 * cs2) * cg - s1 * s1 * s1 * sn1 + s2 * s2 * s2 * sn2;
    p.d[4] = (s1 * s1 * s1 * sn1 + s2 * s2 * s2 * sn2) * cg - s1 * s1 * s1 * s1 * cs1 +
             s2 * s2 * s2 * s2 * cs2;
    return p;
  }
};

struct Polar {
  double rho, th, ct, st;  // ct/st = cos/sin of th
};

Polar to_polar(Vec2 x) {
  Polar p;
  p.rho = std::hypot(x.x, x.y);
  p.th = std::atan2(x.y, x.x);
  if (p.th < 0.0) p.th += 2.0 * kPi;
  if (p.rho > 0.0) {
    p.ct = x.x / p.rho;
    p.st = x.y / p.rho;
  } else {
    p.ct = 1.0;
    p.st = 0.0;
  }
  return p;
}

// For F = rho^s W(theta):
//   grad F = rho^{s-1} (s ct W - st W', s st W + ct W')
//   Lap  F = rho^{s-2} (s^2 W + W'')
Eigen::Vector2d polar_grad(const Polar& p, double s, double W, double Wp) {
  double f = std::pow(p.rho, s - 1.0);
  return {f * (s * p.ct * W - p.st * Wp), f * (s * p.st * W + p.ct * Wp)};
}

ExactSolution make_example1_exact() {
  ExactSolution ex;
  ex.sigma = 856399.0 / 1572864.0;
  ex.gamma = 1.5 * kPi;
  const double sigma = ex.sigma;
  const Angular ang{sigma, ex.gamma};
  const double C = 1e-2;
  const double s1 = 1.0 + sigma;

  // Velocity from the stream function C rho^{1+sigma} psi(theta):
  //   y = (dPhi/dy, -dPhi/dx) = C rho^sigma (W1, W2).
  auto W12 = [ang, s1](const Polar& p, double* W, double* Wp, double* Wpp) {
    Psi ps = ang.psi(p.th);
    W[0] = s1 * p.st * ps.d[0] + p.ct * ps.d[1];
    W[1] = -s1 * p.ct * ps.d[0] + p.st * ps.d[1];
    if (Wp) {
      Wp[0] = s1 * p.ct * ps.d[0] + (s1 - 1.0) * p.st * ps.d[1] + p.ct * ps.d[2];
      Wp[1] = s1 * p.st * ps.d[0] - (s1 - 1.0) * p.ct * ps.d[1] + p.st * ps.d[2];
    }
    if (Wpp) {
      Wpp[0] = -s1 * p.st * ps.d[0] + (2.0 * s1 - 1.0) * p.ct * ps.d[1] +
               (s1 - 2.0) * p.st * ps.d[2] + p.ct * ps.d[3];
      Wpp[1] = s1 * p.ct * ps.d[0] + (2.0 * s1 - 1.0) * p.st * ps.d[1] +
               (2.0 - s1) * p.ct * ps.d[2] + p.st * ps.d[3];
    }
  };

  ex.y = [sigma, C, W12](Vec2 x) -> Eigen::Vector2d {
    Polar p = to_polar(x);
    if (p.rho == 0.0) return Eigen::Vector2d::Zero();
    double W[2];
    W12(p, W, nullptr, nullptr);
    double f = C * std::pow(p.rho, sigma);
    return {f * W[0], f * W[1]};
  };
  ex.grad_y = [sigma, C, W12](Vec2 x) -> Eigen::Matrix2d {
    Polar p = to_polar(x);
    if (p.rho == 0.0) throw std::domain_error("grad y singular at the corner");
    double W[2], Wp[2];
    W12(p, W, Wp, nullptr);
    Eigen::Matrix2d g;
    for (int i = 0; i < 2; ++i) g.row(i) = C * polar_grad(p, sigma, W[i], Wp[i]).transpose();
    return g;
  };
  ex.lap_y = [sigma, C, W12](Vec2 x) -> Eigen::Vector2d {
    Polar p = to_polar(x);
    if (p.rho == 0.0) throw std::domain_error("Lap y singular at the corner");
    double W[2], Wp[2], Wpp[2];
    W12(p, W, Wp, Wpp);
    double f = C * std::pow(p.rho, sigma - 2.0);
    return {f * (sigma * sigma * W[0] + Wpp[0]), f * (sigma * sigma * W[1] + Wpp[1])};
  };

  // Pressure -C rho^{sigma-1} Q(theta) / (1 - sigma), Q = (1+sigma)^2 psi' +
  // psi'''. The -C factor makes the pair (y, p) solve the homogeneous Stokes
  // system (-Lap y + grad p = 0 pointwise, verified numerically); without it
  // the derived forcing f inherits a rho^{sigma-2} singularity that is not
  // square integrable and the residual estimator loses all meaning.
  const double Cp = -C / (1.0 - sigma);
  ex.p = [sigma, ang, s1, Cp](Vec2 x) -> double {
    Polar p = to_polar(x);
    if (p.rho == 0.0) throw std::domain_error("pressure singular at the corner");
    Psi ps = ang.psi(p.th);
    double Q = s1 * s1 * ps.d[1] + ps.d[3];
    return Cp * std::pow(p.rho, sigma - 1.0) * Q;
  };
  ex.grad_p = [sigma, ang, s1, Cp](Vec2 x) -> Eigen::Vector2d {
    Polar p = to_polar(x);
    if (p.rho == 0.0) throw std::domain_error("pressure gradient singular at the corner");
    Psi ps = ang.psi(p.th);
    double Q = s1 * s1 * ps.d[1] + ps.d[3];
    double Qp = s1 * s1 * ps.d[2] + ps.d[4];
    return Cp * polar_grad(p, sigma - 1.0, Q, Qp);
  };

  // z = y - (2,2); same derivatives, same pressure.
  auto y = ex.y;
  ex.z = [y](Vec2 x) -> Eigen::Vector2d { return y(x) - Eigen::Vector2d(2.0, 2.0); };
  ex.grad_z = ex.grad_y;
  ex.lap_z = ex.lap_y;
  ex.r = ex.p;
  ex.grad_r = ex.grad_p;
  return ex;
}

// Builds f and y_omega from the strong forms using the exact evaluators:
//   f       = -nu Lap y + (grad y) y + grad p - clamp(-z/alpha)
//   y_omega =  y + nu Lap z + (grad z) y - (grad y)^T z - grad r
void derive_data(Benchmark& bm) {
  const ExactSolution ex = bm.exact;  // copy of the evaluator set
  const double nu = bm.data.nu, alpha = bm.data.alpha;
  const Eigen::Vector2d a = bm.data.a, b = bm.data.b;
  bm.data.f = [ex, nu, alpha, a, b](Vec2 x) -> Eigen::Vector2d {
    Eigen::Vector2d u = clamp_control(-ex.z(x) / alpha, a, b);
    return -nu * ex.lap_y(x) + ex.grad_y(x) * ex.y(x) + ex.grad_p(x) - u;
  };
  bm.data.y_omega = [ex, nu](Vec2 x) -> Eigen::Vector2d {
    Eigen::Vector2d yv = ex.y(x), zv = ex.z(x);
    return yv + nu * ex.lap_z(x) + ex.grad_z(x) * yv - ex.grad_y(x).transpose() * zv -
           ex.grad_r(x);
  };
  bm.data.state_bc = ex.y;
  bm.data.adjoint_bc = ex.z;
}

// Uniform refinements of the canned coarse meshes. The coarsest meshes leave
// too few free velocity nodes for a stable Taylor-Hood pressure, so the
// benchmarks start a few levels down.
Mesh refine_uniform(Mesh mesh, int times) {
  for (int i = 0; i < times; ++i) {
    std::vector<int> all(mesh.n_cells());
    for (int c = 0; c < mesh.n_cells(); ++c) all[c] = c;
    mesh = refine(mesh, all);
  }
  return mesh;
}

}  // namespace

void rederive(Benchmark& bm) { derive_data(bm); }

Benchmark example1(double alpha, double nu) {
  Benchmark bm;
  bm.name = "example1";
  bm.exact = make_example1_exact();
  bm.data.nu = nu;
  bm.data.alpha = alpha;
  bm.data.a = {-2.0, -2.0};
  bm.data.b = {2.0, 2.0};
  bm.domain_polygon = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}};
  bm.initial_mesh = refine_uniform(lshape_mesh(), 2);
  derive_data(bm);
  return bm;
}

Benchmark poly2d() {
  Benchmark bm;
  bm.name = "poly2d";
  ExactSolution& ex = bm.exact;
  ex.y = [](Vec2 x) -> Eigen::Vector2d { return {x.x * x.x, -2.0 * x.x * x.y}; };
  ex.grad_y = [](Vec2 x) -> Eigen::Matrix2d {
    Eigen::Matrix2d g;
    g << 2.0 * x.x, 0.0, -2.0 * x.y, -2.0 * x.x;
    return g;
  };
  ex.lap_y = [](Vec2) -> Eigen::Vector2d { return {2.0, 0.0}; };
  ex.p = [](Vec2 x) { return x.x + x.y - 1.0; };
  ex.grad_p = [](Vec2) -> Eigen::Vector2d { return {1.0, 1.0}; };
  auto y = ex.y;
  auto gy = ex.grad_y;
  auto ly = ex.lap_y;
  ex.z = [y](Vec2 x) -> Eigen::Vector2d { return 0.1 * y(x); };
  ex.grad_z = [gy](Vec2 x) -> Eigen::Matrix2d { return 0.1 * gy(x); };
  ex.lap_z = [ly](Vec2 x) -> Eigen::Vector2d { return 0.1 * ly(x); };
  ex.r = [](Vec2 x) { return x.x - 0.5; };
  ex.grad_r = [](Vec2) -> Eigen::Vector2d { return {1.0, 0.0}; };

  bm.data.nu = 1.0;
  bm.data.alpha = 1.0;
  bm.data.a = {-1e6, -1e6};
  bm.data.b = {1e6, 1e6};
  bm.domain_polygon = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  bm.initial_mesh = refine_uniform(unit_square_mesh(), 3);
  derive_data(bm);
  return bm;
}

namespace {

bool inside_polygon(const std::vector<Vec2>& poly, Vec2 p) {
  bool in = false;
  int n = static_cast<int>(poly.size());
  for (int i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i].y > p.y) != (poly[j].y > p.y) &&
        p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x)
      in = !in;
  }
  return in;
}

double dist_to_boundary(const std::vector<Vec2>& poly, Vec2 p) {
  double d = 1e300;
  int n = static_cast<int>(poly.size());
  for (int i = 0, j = n - 1; i < n; j = i++) {
    Vec2 a = poly[j], b = poly[i], ab = b - a;
    double t = dot(p - a, ab) / std::max(1e-300, dot(ab, ab));
    t = std::min(1.0, std::max(0.0, t));
    d = std::min(d, norm(p - (a + t * ab)));
  }
  return d;
}

// Radial bump eta(|x-c|) = (1 - (t/R)^2)^8 times a fixed direction; the high
// power keeps the integrand C^7 at the support circle so the fixed-degree
// quadrature resolves the weak residual well below the gate tolerance.
struct Bump {
  Vec2 c;
  double R;
  Eigen::Vector2d dir;
  Eigen::Vector2d value(Vec2 x) const {
    Vec2 d = x - c;
    double u = dot(d, d) / (R * R);
    if (u >= 1.0) return Eigen::Vector2d::Zero();
    double e = 1.0 - u;
    double e2 = e * e;
    return (e2 * e2 * e2 * e2) * dir;
  }
  // grad w_i = dir_i * g * (x - c), g = -(16/R^2)(1-u)^7
  Eigen::Matrix2d grad(Vec2 x) const {
    Vec2 d = x - c;
    double u = dot(d, d) / (R * R);
    if (u >= 1.0) return Eigen::Matrix2d::Zero();
    double e = 1.0 - u;
    double e3 = e * e * e;
    double g = -16.0 / (R * R) * e3 * e3 * e;
    Eigen::Matrix2d m;
    m << dir(0) * g * d.x, dir(0) * g * d.y, dir(1) * g * d.x, dir(1) * g * d.y;
    return m;
  }
};

}  // namespace

ManufacturedReport verify_manufactured(const ExactSolution& exact, const ProblemData& data,
                                       const std::vector<Vec2>& domain_polygon,
                                       const Mesh& mesh, int n_tests, unsigned seed,
                                       double tol) {
  const QuadratureRule rule = make_rule(19);
  std::mt19937 rng(seed);
  // Bounding box of the polygon for center sampling.
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (Vec2 v : domain_polygon) {
    x0 = std::min(x0, v.x);
    x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y);
    y1 = std::max(y1, v.y);
  }
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), uang(0.0, 2.0 * kPi);
  const double R = 0.18 * std::min(x1 - x0, y1 - y0);

  ManufacturedReport rep;
  for (int t = 0; t < n_tests; ++t) {
    Bump bump;
    bump.R = R;
    for (int tries = 0;; ++tries) {
      if (tries > 100000) throw std::runtime_error("verify_manufactured: cannot place bump");
      Vec2 c{ux(rng), uy(rng)};
      if (inside_polygon(domain_polygon, c) && dist_to_boundary(domain_polygon, c) >= R) {
        bump.c = c;
        break;
      }
    }
    double phi = uang(rng);
    bump.dir = {std::cos(phi), std::sin(phi)};

    double res_st = 0.0, scale_st = 0.0, res_ad = 0.0, scale_ad = 0.0;
    for (int cc = 0; cc < mesh.n_cells(); ++cc) {
      CellMap cm = cell_map(mesh, cc);
      // Skip cells whose circumscribing vertex distances put them outside the support.
      bool near = false;
      for (int k = 0; k < 3; ++k)
        if (norm(mesh.vertices[mesh.cells[cc][k]] - bump.c) < R + mesh.geometry(cc).h) near = true;
      if (!near) continue;
      for (int q = 0; q < rule.size(); ++q) {
        Vec2 x = bary_to_xy(mesh, cc, rule.points[q]);
        Eigen::Vector2d w = bump.value(x);
        Eigen::Matrix2d gw = bump.grad(x);
        if (w.isZero(0.0) && gw.isZero(0.0)) continue;
        double wt = rule.weights[q] * cm.det;
        double divw = gw(0, 0) + gw(1, 1);

        Eigen::Vector2d yv = exact.y(x), zv = exact.z(x);
        Eigen::Matrix2d gy = exact.grad_y(x), gz = exact.grad_z(x);
        double pv = exact.p(x), rv = exact.r(x);
        Eigen::Vector2d u = clamp_control(-zv / data.alpha, data.a, data.b);

        double t1 = data.nu * (gy.array() * gw.array()).sum();
        double t2 = (gy * yv).dot(w);
        double t3 = -pv * divw;
        double t4 = -(data.f(x) + u).dot(w);
        res_st += wt * (t1 + t2 + t3 + t4);
        scale_st += wt * (std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4));

        double a1 = data.nu * (gw.array() * gz.array()).sum();
        double a2 = (gw * yv).dot(zv);   // b(y; w, z)
        double a3 = (gy * w).dot(zv);    // b(w; y, z)
        double a4 = -rv * divw;
        double a5 = -(yv - data.y_omega(x)).dot(w);
        res_ad += wt * (a1 + a2 + a3 + a4 + a5);
        scale_ad += wt * (std::abs(a1) + std::abs(a2) + std::abs(a3) + std::abs(a4) + std::abs(a5));
      }
    }
    rep.state_residual_rel = std::max(rep.state_residual_rel, std::abs(res_st) / scale_st);
    rep.adjoint_residual_rel = std::max(rep.adjoint_residual_rel, std::abs(res_ad) / scale_ad);
  }
  rep.ok = rep.state_residual_rel <= tol && rep.adjoint_residual_rel <= tol;
  return rep;
}

double ErrorBundle::total() const {
  return std::sqrt(y_h1 * y_h1 + p_l2 * p_l2 + z_h1 * z_h1 + r_l2 * r_l2 + u_l2 * u_l2);
}

ErrorBundle exact_errors(const FemSetup& fem, const OptimalitySolution& sol,
                         const ExactSolution& exact, const ProblemData& data) {
  const Mesh& mesh = *fem.mesh;
  const QuadratureRule rule = make_rule(19);
  ErrorBundle e;
  e.y_h1 = h1_semi_error_vec(mesh, sol.y, exact.grad_y, rule);
  e.p_l2 = l2_error_scalar_meanfree(mesh, sol.p, exact.p, rule);
  e.z_h1 = h1_semi_error_vec(mesh, sol.z, exact.grad_z, rule);
  e.r_l2 = l2_error_scalar_meanfree(mesh, sol.r, exact.r, rule);

  auto ubar = [&](Vec2 x) {
    return clamp_control(-exact.z(x) / data.alpha, data.a, data.b);
  };
  if (sol.scheme == Scheme::FullyDiscrete) {
    e.u_l2 = l2_error_vec(mesh, sol.u, ubar, rule);
  } else {
    double s = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      CellMap cm = cell_map(mesh, c);
      for (int q = 0; q < rule.size(); ++q) {
        Vec2 x = bary_to_xy(mesh, c, rule.points[q]);
        Eigen::Vector2d d = semi_control(mesh, sol.z, data, c, rule.points[q]) - ubar(x);
        s += rule.weights[q] * cm.det * d.squaredNorm();
      }
    }
    e.u_l2 = std::sqrt(s);
  }
  return e;
}

std::vector<PolySegment> active_set_boundary(const Mesh& mesh,
                                             const std::function<Eigen::Vector2d(Vec2)>& arg_fn,
                                             const Eigen::Vector2d& lower,
                                             const Eigen::Vector2d& upper) {
  std::vector<PolySegment> segs;
  int next_id = 0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    Vec2 v[3];
    for (int k = 0; k < 3; ++k) v[k] = mesh.vertices[mesh.cells[c][k]];
    Vec2 m[3];  // m[k] opposite vertex k
    for (int k = 0; k < 3; ++k) m[k] = 0.5 * (v[(k + 1) % 3] + v[(k + 2) % 3]);
    const Vec2 sub[4][3] = {{v[0], m[2], m[1]}, {m[2], v[1], m[0]}, {m[1], m[0], v[2]},
                            {m[0], m[1], m[2]}};
    for (int comp = 0; comp < 2; ++comp) {
      for (int bnd = 0; bnd < 2; ++bnd) {
        double bval = bnd == 0 ? lower(comp) : upper(comp);
        if (std::abs(bval) >= 1e50) continue;  // effectively unbounded
        for (const auto& tri : sub) {
          double f[3];
          for (int k = 0; k < 3; ++k) f[k] = arg_fn(tri[k])(comp) - bval;
          Vec2 cross[2];
          int ncross = 0;
          for (int i = 0; i < 3 && ncross < 2; ++i) {
            int j = (i + 1) % 3;
            bool si = f[i] >= 0.0, sj = f[j] >= 0.0;
            if (si == sj) continue;
            double t = f[i] / (f[i] - f[j]);
            cross[ncross++] = tri[i] + t * (tri[j] - tri[i]);
          }
          if (ncross == 2)
            segs.push_back({comp, bnd, cross[0], cross[1], next_id++});
        }
      }
    }
  }
  return segs;
}

void write_polylines_csv(const std::string& path, const std::vector<PolySegment>& segs) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "component,bound,x,y,segment\n";
  os.precision(17);
  for (const auto& s : segs) {
    os << s.component << ',' << s.bound << ',' << s.a.x << ',' << s.a.y << ',' << s.segment_id
       << '\n';
    os << s.component << ',' << s.bound << ',' << s.b.x << ',' << s.b.y << ',' << s.segment_id
       << '\n';
  }
}

}  // namespace nsopt
