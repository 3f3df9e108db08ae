#pragma once

#include "ekr/matrix.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ekr {

// Pearson correlation with sample standard deviations (T-1 denominator).
// Constant input is an undefined-correlation error, not a silent 0.
double pcc(const std::vector<double>& a, const std::vector<double>& b);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  bool significant = false;
};

// Two-sided two-sample t-test, pooled variance by default, Welch with
// welch=true. Zero pooled variance: equal means give t=0, p=1; unequal
// means give an infinite t with p=0.
TTestResult two_sample_ttest(const std::vector<double>& s1, const std::vector<double>& s2,
                             double alpha = 0.05, bool welch = false);

// Regularized incomplete beta function I_x(a, b); exposed because the t
// distribution's tail probability is computed through it.
double regularized_incomplete_beta(double a, double b, double x);

struct PccEntry {
  int subject = 0;
  std::string method;
  std::string band;
  std::string axis;
  double value = 0.0;
};

struct PccReport {
  std::vector<PccEntry> entries;
};

// One evaluation cell: truth and prediction tracks (rows x 3) for a
// (subject, method, band) triple.
struct TrackSet {
  int subject = 0;
  std::string method;
  std::string band;
  Matrix truth;
  Matrix predicted;
};

// Per-axis PCC for every cell. The wpd-cnnlstm method is only defined on
// the entire band; a cell violating that is an error.
PccReport band_sweep(const std::vector<TrackSet>& cells);

void save_pcc_report(const PccReport& report, const std::string& path);
PccReport load_pcc_report(const std::string& path);

struct TTestRow {
  std::string pair;
  std::string direction;
  TTestResult result;
};

void save_ttest_csv(const std::vector<TTestRow>& rows, const std::string& path);

// CSV of (t, truth, prediction) columns plus one SVG line plot per axis and
// a 3-D projection SVG under base_path + {".csv", "_x.svg", "_y.svg",
// "_z.svg", "_3d.svg"}. Returns the written paths in that order.
std::vector<std::string> export_trajectories(const Matrix& truth, const Matrix& predicted,
                                             const std::string& base_path);

} // namespace ekr
