#include "nsopt/reporting.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsopt/adaptivity.hpp"
#include "nsopt/manufactured.hpp"

namespace nsopt {

namespace {

const char* kHeader =
    "iter,ndof,est_st,est_ad,est_ct,est_ocp,err_y_h1,err_p_l2,err_z_h1,err_r_l2,err_u_l2,"
    "err_total,effectivity,seconds";

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_csv(std::ostream& os, const StudyOutput& study) {
  if (!study.config_json.empty()) os << "# " << study.config_json << '\n';
  os << kHeader << '\n';
  for (const auto& r : study.records) {
    os << r.iter << ',' << r.ndof << ',' << fmt(r.est_st) << ',' << fmt(r.est_ad) << ','
       << fmt(r.est_ct) << ',' << fmt(r.est_ocp) << ',' << fmt(r.err_y_h1) << ','
       << fmt(r.err_p_l2) << ',' << fmt(r.err_z_h1) << ',' << fmt(r.err_r_l2) << ','
       << fmt(r.err_u_l2) << ',' << fmt(r.err_total) << ',' << fmt(r.effectivity) << ','
       << fmt(r.seconds) << '\n';
  }
}

void write_csv_file(const std::string& path, const StudyOutput& study) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  write_csv(os, study);
}

StudyOutput parse_csv(std::istream& is) {
  StudyOutput study;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t s = line.find_first_not_of(" \t", 1);
      study.config_json = s == std::string::npos ? "" : line.substr(s);
      continue;
    }
    if (line.rfind("iter,", 0) == 0) continue;  // header
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> f;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() != 14) throw std::runtime_error("malformed CSV row: " + line);
    ConvergenceRecord r;
    r.iter = std::stoi(f[0]);
    r.ndof = std::stoll(f[1]);
    r.est_st = std::stod(f[2]);
    r.est_ad = std::stod(f[3]);
    r.est_ct = std::stod(f[4]);
    r.est_ocp = std::stod(f[5]);
    r.err_y_h1 = std::stod(f[6]);
    r.err_p_l2 = std::stod(f[7]);
    r.err_z_h1 = std::stod(f[8]);
    r.err_r_l2 = std::stod(f[9]);
    r.err_u_l2 = std::stod(f[10]);
    r.err_total = std::stod(f[11]);
    r.effectivity = std::stod(f[12]);
    r.seconds = std::stod(f[13]);
    study.records.push_back(r);
  }
  return study;
}

StudyOutput parse_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return parse_csv(is);
}

double fit_eoc(const std::vector<ConvergenceRecord>& records,
               const std::function<double(const ConvergenceRecord&)>& quantity, int k) {
  std::vector<std::pair<double, double>> pts;  // (log ndof, log q)
  int start = std::max(0, static_cast<int>(records.size()) - k);
  for (std::size_t i = start; i < records.size(); ++i) {
    double q = quantity(records[i]);
    if (q > 0.0 && records[i].ndof > 0)
      pts.emplace_back(std::log(static_cast<double>(records[i].ndof)), std::log(q));
  }
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = static_cast<double>(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

std::string stem_for_dumps(const std::string& out) {
  if (out.empty()) return "";
  std::string s = out;
  if (s.size() > 4 && s.substr(s.size() - 4) == ".csv") s = s.substr(0, s.size() - 4);
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Adaptive FEM benchmark for control-constrained stationary "
               "Navier-Stokes optimal control"};
  std::string problem, scheme = "fully", quadrature, refine_mode = "adaptive", out;
  long long max_ndof = 50000;
  int max_iters = 30;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double nu = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> bounds;
  bool dump_mesh = false, dump_indicators = false, verbose = false;

  app.add_option("--problem", problem, "Benchmark problem")
      ->required()
      ->check(CLI::IsMember({"example1", "poly2d"}));
  app.add_option("--scheme", scheme, "Discretization scheme")
      ->check(CLI::IsMember({"fully", "semi"}));
  app.add_option("--quadrature", quadrature, "Semi-discrete control quadrature variant")
      ->check(CLI::IsMember({"s19", "s5", "s5c"}));
  app.add_option("--refine", refine_mode, "Refinement strategy")
      ->check(CLI::IsMember({"adaptive", "uniform"}));
  app.add_option("--max-ndof", max_ndof, "Stop once Ndof reaches this");
  app.add_option("--max-iters", max_iters, "Maximum loop iterations");
  app.add_option("--alpha", alpha, "Regularization weight override");
  app.add_option("--nu", nu, "Viscosity override");
  app.add_option("--bounds", bounds, "Control bounds a b (componentwise)")->expected(2);
  app.add_option("--out", out, "Output CSV path");
  app.add_flag("--dump-mesh", dump_mesh, "Write the final mesh");
  app.add_flag("--dump-indicators", dump_indicators, "Write per-cell indicators per iteration");
  app.add_flag("--verbose", verbose, "Per-iteration progress on stderr");

  std::vector<std::string> full;
  full.push_back("nsopt-bench");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : full) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (!quadrature.empty() && scheme == "fully") {
    std::cerr << "usage error: --quadrature applies to --scheme semi only\n";
    return 64;
  }

  Benchmark bm = problem == "example1" ? example1() : poly2d();
  bool rederive_needed = false;
  if (!std::isnan(alpha)) {
    bm.data.alpha = alpha;
    rederive_needed = true;
  }
  if (!std::isnan(nu)) {
    bm.data.nu = nu;
    rederive_needed = true;
  }
  if (bounds.size() == 2) {
    bm.data.a = {bounds[0], bounds[0]};
    bm.data.b = {bounds[1], bounds[1]};
    rederive_needed = true;
  }
  if (rederive_needed) rederive(bm);

  if (problem == "example1") {
    Mesh gate_mesh = bm.initial_mesh;
    for (int i = 0; i < 8; ++i) {
      std::vector<int> all(gate_mesh.n_cells());
      for (int c = 0; c < gate_mesh.n_cells(); ++c) all[c] = c;
      gate_mesh = refine(gate_mesh, all);
    }
    ManufacturedReport rep =
        verify_manufactured(bm.exact, bm.data, bm.domain_polygon, gate_mesh);
    if (verbose)
      std::cerr << "manufactured-data gate: state " << rep.state_residual_rel << ", adjoint "
                << rep.adjoint_residual_rel << '\n';
    if (!rep.ok) {
      std::cerr << "manufactured-data gate failed: state residual " << rep.state_residual_rel
                << ", adjoint residual " << rep.adjoint_residual_rel << " (tol 1e-6)\n";
      return 3;
    }
  }

  LoopConfig cfg;
  cfg.scheme = scheme == "fully" ? Scheme::FullyDiscrete : Scheme::SemiDiscrete;
  cfg.variant = quadrature == "s5" ? QuadVariant::S5
                                   : (quadrature == "s5c" ? QuadVariant::S5c : QuadVariant::S19);
  cfg.uniform = refine_mode == "uniform";
  cfg.max_ndof = max_ndof;
  cfg.max_iters = max_iters;
  if (verbose) cfg.solver.log = &std::cerr;

  std::string stem = stem_for_dumps(out);
  cfg.on_iteration = [&](int iter, const FemSetup& fem, const OptimalitySolution&,
                         const std::vector<IndicatorField>& inds) {
    if (verbose)
      std::cerr << "iter " << iter << " ndof " << count_ndof(fem, cfg.scheme) << " est_ocp "
                << inds.back().total() << '\n';
    if (dump_indicators) {
      std::ostringstream name;
      name << (stem.empty() ? std::string("indicators") : stem + ".indicators") << '.';
      name.width(3);
      name.fill('0');
      name << iter;
      std::ofstream os(name.str() + ".csv");
      os.precision(17);
      os << "cell,est_st,est_ad,est_ct,est_ocp\n";
      bool fully = cfg.scheme == Scheme::FullyDiscrete;
      for (int c = 0; c < fem.mesh->n_cells(); ++c) {
        double st = inds[0].values(c), ad = inds[1].values(c);
        double ct = fully ? inds[2].values(c) : 0.0;
        os << c << ',' << st << ',' << ad << ',' << ct << ',' << inds.back().values(c) << '\n';
      }
    }
  };

  LoopResult res = run_loop(bm, cfg);

  StudyOutput study;
  nlohmann::json j;
  j["problem"] = problem;
  j["scheme"] = scheme;
  if (cfg.scheme == Scheme::SemiDiscrete) j["quadrature"] = quadrature.empty() ? "s19" : quadrature;
  j["refine"] = refine_mode;
  j["max_ndof"] = max_ndof;
  j["max_iters"] = max_iters;
  j["alpha"] = bm.data.alpha;
  j["nu"] = bm.data.nu;
  j["bounds"] = {bm.data.a(0), bm.data.b(0)};
  study.config_json = j.dump();
  study.records = res.records;

  if (!out.empty()) write_csv_file(out, study);
  else write_csv(std::cout, study);

  if (dump_mesh)
    write_mesh_file(stem.empty() ? "mesh_final.txt" : stem + ".mesh.txt", res.final_mesh);

  auto slope = [&](const char* name, double s) {
    std::cout << "EOC " << name << " = ";
    if (std::isnan(s)) std::cout << "n/a";
    else std::cout << s;
    std::cout << '\n';
  };
  slope("est_ocp", fit_eoc(study.records, [](const ConvergenceRecord& r) { return r.est_ocp; }));
  slope("err_total",
        fit_eoc(study.records, [](const ConvergenceRecord& r) { return r.err_total; }));
  slope("err_u_l2",
        fit_eoc(study.records, [](const ConvergenceRecord& r) { return r.err_u_l2; }));

  if (!res.failure.empty()) {
    std::cerr << "solver failure: " << res.failure << '\n';
    return 2;
  }
  return 0;
}

}  // namespace nsopt
