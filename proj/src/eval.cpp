#include "ekr/eval.hpp"

#include "ekr/errors.hpp"
#include "ekr/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace ekr {

namespace {

void mean_and_sd(const std::vector<double>& x, double& mean, double& sd) {
  mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
}

} // namespace

double pcc(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw data_error("pcc: sequences differ in length");
  if (a.size() < 2) throw data_error("pcc: need at least 2 samples");
  double mean_a, sd_a, mean_b, sd_b;
  mean_and_sd(a, mean_a, sd_a);
  mean_and_sd(b, mean_b, sd_b);
  if (sd_a == 0.0 || sd_b == 0.0) {
    throw numeric_error("pcc: correlation undefined for a constant sequence");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += ((a[i] - mean_a) / sd_a) * ((b[i] - mean_b) / sd_b);
  }
  return acc / static_cast<double>(a.size() - 1);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw numeric_error("incomplete beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw numeric_error("incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  // Continued fraction converges fast for x < (a+1)/(a+b+2); otherwise use
  // the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
  if (x > (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
  }
  const double log_front = a * std::log(x) + b * std::log(1.0 - x) + std::lgamma(a + b) -
                           std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(log_front) / a;

  // Modified Lentz evaluation of the standard continued fraction.
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 500; ++m) {
    const double dm = static_cast<double>(m);
    double numerator = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + numerator * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + numerator / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    numerator = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + numerator * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + numerator / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return front * f;
}

TTestResult two_sample_ttest(const std::vector<double>& s1, const std::vector<double>& s2,
                             double alpha, bool welch) {
  if (s1.size() < 2 || s2.size() < 2) {
    throw data_error("t-test: each set needs at least 2 values");
  }
  const double n1 = static_cast<double>(s1.size());
  const double n2 = static_cast<double>(s2.size());
  double m1, sd1, m2, sd2;
  mean_and_sd(s1, m1, sd1);
  mean_and_sd(s2, m2, sd2);
  const double v1 = sd1 * sd1;
  const double v2 = sd2 * sd2;

  TTestResult result;
  double se;
  if (welch) {
    se = std::sqrt(v1 / n1 + v2 / n2);
    const double num = (v1 / n1 + v2 / n2) * (v1 / n1 + v2 / n2);
    const double den = (v1 / n1) * (v1 / n1) / (n1 - 1.0) + (v2 / n2) * (v2 / n2) / (n2 - 1.0);
    result.df = (den > 0.0) ? num / den : n1 + n2 - 2.0;
  } else {
    const double pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
    se = std::sqrt(pooled * (1.0 / n1 + 1.0 / n2));
    result.df = n1 + n2 - 2.0;
  }

  if (se == 0.0) {
    if (m1 == m2) {
      result.t = 0.0;
      result.p = 1.0;
    } else {
      result.t = (m1 > m2) ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
      result.p = 0.0;
    }
  } else {
    result.t = (m1 - m2) / se;
    result.p = regularized_incomplete_beta(result.df / 2.0, 0.5,
                                           result.df / (result.df + result.t * result.t));
  }
  result.significant = result.p < alpha;
  return result;
}

PccReport band_sweep(const std::vector<TrackSet>& cells) {
  static const char* axes[3] = {"x", "y", "z"};
  PccReport report;
  for (const auto& cell : cells) {
    if (cell.method == "wpd-cnnlstm" && cell.band != "entire") {
      throw data_error("band_sweep: wpd-cnnlstm is only evaluated on the entire band, got '" +
                       cell.band + "'");
    }
    if (cell.truth.rows() != cell.predicted.rows() || cell.truth.cols() != 3 ||
        cell.predicted.cols() != 3) {
      throw data_error("band_sweep: truth and prediction must both be rows x 3");
    }
    for (std::size_t axis = 0; axis < 3; ++axis) {
      std::vector<double> a(cell.truth.rows()), b(cell.truth.rows());
      for (std::size_t r = 0; r < cell.truth.rows(); ++r) {
        a[r] = cell.truth(r, axis);
        b[r] = cell.predicted(r, axis);
      }
      PccEntry entry;
      entry.subject = cell.subject;
      entry.method = cell.method;
      entry.band = cell.band;
      entry.axis = axes[axis];
      entry.value = pcc(a, b);
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

void save_pcc_report(const PccReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write report " + path);
  out << "subject,method,band,axis,pcc\n";
  for (const auto& e : report.entries) {
    out << e.subject << ',' << e.method << ',' << e.band << ',' << e.axis << ','
        << format_double(e.value) << "\n";
  }
}

PccReport load_pcc_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open report " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "subject,method,band,axis,pcc") {
    throw data_error(path + ": malformed report header");
  }
  PccReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(lineno);
    const std::vector<std::string> parts = split(t, ',');
    if (parts.size() != 5) throw data_error(ctx + ": expected 5 fields");
    PccEntry entry;
    entry.subject = static_cast<int>(parse_int(parts[0], ctx));
    entry.method = parts[1];
    entry.band = parts[2];
    entry.axis = parts[3];
    entry.value = parse_double(parts[4], ctx);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

void save_ttest_csv(const std::vector<TTestRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write t-test csv " + path);
  out << "pair,direction,t,df,p,significant\n";
  if (rows.empty()) {
    out << "# no method pairs: need at least two methods for a t-test\n";
    return;
  }
  for (const auto& row : rows) {
    out << row.pair << ',' << row.direction << ',' << format_double(row.result.t) << ','
        << format_double(row.result.df) << ',' << format_double(row.result.p) << ','
        << (row.result.significant ? "yes" : "no") << "\n";
  }
}

namespace {

struct SvgScale {
  double lo, hi;
  double map(double v, double pix_lo, double pix_hi) const {
    const double f = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
    return pix_lo + f * (pix_hi - pix_lo);
  }
};

SvgScale range_of(const std::vector<double>& a, const std::vector<double>& b) {
  double lo = a[0], hi = a[0];
  for (double v : a) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : b) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     const char* color) {
  std::string out = "  <polyline fill=\"none\" stroke=\"";
  out += color;
  out += "\" stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += format_double(std::round(xs[i] * 100.0) / 100.0);
    out += ',';
    out += format_double(std::round(ys[i] * 100.0) / 100.0);
  }
  out += "\"/>\n";
  return out;
}

void write_line_svg(const std::string& path, const std::string& title,
                    const std::vector<double>& truth, const std::vector<double>& pred) {
  const double w = 640.0, h = 320.0, ml = 40.0, mr = 10.0, mt = 24.0, mb = 20.0;
  const SvgScale sy = range_of(truth, pred);
  const std::size_t n = truth.size();
  std::vector<double> xs(n), yt(n), yp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = (n > 1) ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
    xs[i] = ml + f * (w - ml - mr);
    yt[i] = sy.map(truth[i], h - mb, mt);
    yp[i] = sy.map(pred[i], h - mb, mt);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write svg " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 320\">\n";
  out << "  <rect width=\"640\" height=\"320\" fill=\"white\"/>\n";
  out << "  <text x=\"12\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">" << title
      << " (actual vs predicted)</text>\n";
  out << "  <line x1=\"40\" y1=\"300\" x2=\"630\" y2=\"300\" stroke=\"#999\"/>\n";
  out << "  <line x1=\"40\" y1=\"24\" x2=\"40\" y2=\"300\" stroke=\"#999\"/>\n";
  out << polyline(xs, yt, "#1f77b4");
  out << polyline(xs, yp, "#d62728");
  out << "</svg>\n";
}

} // namespace

std::vector<std::string> export_trajectories(const Matrix& truth, const Matrix& predicted,
                                             const std::string& base_path) {
  if (truth.rows() != predicted.rows() || truth.cols() != 3 || predicted.cols() != 3) {
    throw data_error("export_trajectories: truth and prediction must both be rows x 3");
  }
  if (truth.rows() == 0) throw data_error("export_trajectories: empty tracks");

  std::vector<std::string> written;
  const std::string csv_path = base_path + ".csv";
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw data_error("cannot write trajectory csv " + csv_path);
    out << "t,x_true,y_true,z_true,x_pred,y_pred,z_pred\n";
    for (std::size_t r = 0; r < truth.rows(); ++r) {
      out << r;
      for (std::size_t a = 0; a < 3; ++a) out << ',' << format_double(truth(r, a));
      for (std::size_t a = 0; a < 3; ++a) out << ',' << format_double(predicted(r, a));
      out << "\n";
    }
  }
  written.push_back(csv_path);

  static const char* axes[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    std::vector<double> tr(truth.rows()), pr(truth.rows());
    for (std::size_t r = 0; r < truth.rows(); ++r) {
      tr[r] = truth(r, a);
      pr[r] = predicted(r, a);
    }
    const std::string path = base_path + "_" + axes[a] + ".svg";
    write_line_svg(path, std::string("axis ") + axes[a], tr, pr);
    written.push_back(path);
  }

  // Oblique projection of the two 3-D tracks.
  {
    const std::string path = base_path + "_3d.svg";
    std::vector<double> ut(truth.rows()), vt(truth.rows()), up(truth.rows()), vp(truth.rows());
    for (std::size_t r = 0; r < truth.rows(); ++r) {
      ut[r] = truth(r, 0) + 0.5 * truth(r, 1);
      vt[r] = truth(r, 2) + 0.25 * truth(r, 1);
      up[r] = predicted(r, 0) + 0.5 * predicted(r, 1);
      vp[r] = predicted(r, 2) + 0.25 * predicted(r, 1);
    }
    const SvgScale sx = range_of(ut, up);
    const SvgScale sy = range_of(vt, vp);
    const double w = 480.0, h = 480.0, m = 30.0;
    auto project = [&](const std::vector<double>& us, const std::vector<double>& vs,
                       std::vector<double>& xs, std::vector<double>& ys) {
      xs.resize(us.size());
      ys.resize(us.size());
      for (std::size_t i = 0; i < us.size(); ++i) {
        xs[i] = sx.map(us[i], m, w - m);
        ys[i] = sy.map(vs[i], h - m, m);
      }
    };
    std::vector<double> xs, ys;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write svg " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 480 480\">\n";
    out << "  <rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
    out << "  <text x=\"12\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">3-D trajectory"
           " (actual vs predicted)</text>\n";
    project(ut, vt, xs, ys);
    out << polyline(xs, ys, "#1f77b4");
    project(up, vp, xs, ys);
    out << polyline(xs, ys, "#d62728");
    out << "</svg>\n";
    written.push_back(path);
  }
  return written;
}

} // namespace ekr
