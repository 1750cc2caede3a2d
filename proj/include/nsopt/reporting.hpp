#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace nsopt {

// One adaptive-loop iteration. The est_st/est_ad/est_ct columns carry the
// *squared* per-part totals; est_ocp is the square root of their sum, and
// effectivity = est_ocp / err_total.
struct ConvergenceRecord {
  int iter = 0;
  long long ndof = 0;
  double est_st = 0.0;
  double est_ad = 0.0;
  double est_ct = 0.0;
  double est_ocp = 0.0;
  double err_y_h1 = 0.0;
  double err_p_l2 = 0.0;
  double err_z_h1 = 0.0;
  double err_r_l2 = 0.0;
  double err_u_l2 = 0.0;
  double err_total = 0.0;
  double effectivity = 0.0;
  double seconds = 0.0;
};

struct StudyOutput {
  std::string config_json;  // echoed as a '#'-prefixed comment line
  std::vector<ConvergenceRecord> records;
};

void write_csv(std::ostream& os, const StudyOutput& study);
void write_csv_file(const std::string& path, const StudyOutput& study);
StudyOutput parse_csv(std::istream& is);
StudyOutput parse_csv_file(const std::string& path);

// Least-squares slope of log(quantity) vs log(Ndof) over the last k records.
// NaN when fewer than 2 usable records (quantity must be positive).
double fit_eoc(const std::vector<ConvergenceRecord>& records,
               const std::function<double(const ConvergenceRecord&)>& quantity, int k = 5);

int run_cli(const std::vector<std::string>& args);

}  // namespace nsopt
