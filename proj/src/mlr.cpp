#include "ekr/mlr.hpp"

#include "ekr/errors.hpp"
#include "ekr/util.hpp"

#include <cmath>
#include <fstream>

namespace ekr {

namespace {

constexpr const char* kAxisNames[3] = {"x", "y", "z"};

} // namespace

DesignMatrix build_lagged(const Matrix& eeg, const LagSpec& spec) {
  const std::size_t n = eeg.rows();
  const std::size_t t_len = eeg.cols();
  const std::size_t lag = spec.max_lag;
  if (t_len <= lag) {
    throw data_error("build_lagged: " + std::to_string(t_len) + " samples cannot support lag " +
                     std::to_string(lag));
  }
  DesignMatrix design;
  design.channels = n;
  design.max_lag = lag;
  design.x = Matrix(t_len - lag, 1 + n * (lag + 1));
  for (std::size_t t = lag; t < t_len; ++t) {
    const std::size_t r = t - lag;
    design.x(r, 0) = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t l = 0; l <= lag; ++l) {
        design.x(r, 1 + c * (lag + 1) + l) = eeg(c, t - l);
      }
    }
  }
  return design;
}

Matrix lagged_targets(const Matrix& kinematics, std::size_t max_lag) {
  if (kinematics.rows() != 3) throw data_error("lagged_targets: kinematics must have 3 rows");
  if (kinematics.cols() <= max_lag) {
    throw data_error("lagged_targets: too few samples for lag " + std::to_string(max_lag));
  }
  Matrix y(kinematics.cols() - max_lag, 3);
  for (std::size_t t = max_lag; t < kinematics.cols(); ++t) {
    for (std::size_t k = 0; k < 3; ++k) y(t - max_lag, k) = kinematics(k, t);
  }
  return y;
}

MlrModel fit(const DesignMatrix& design, const Matrix& targets, double ridge) {
  const Matrix& x = design.x;
  const std::size_t cols = x.cols();
  if (targets.rows() != x.rows() || targets.cols() != 3) {
    throw data_error("mlr fit: targets must be rows x 3 aligned with the design matrix");
  }
  if (ridge < 0.0) throw data_error("mlr fit: ridge must be nonnegative");
  if (x.rows() < cols && ridge == 0.0) {
    throw data_error("mlr fit: fewer rows than columns requires ridge > 0");
  }

  Matrix beta;
  if (ridge == 0.0) {
    beta = least_squares_solve(x, targets);
  } else {
    // Augmented rows sqrt(ridge)*e_j for every non-intercept column j make
    // the objective ||X b - y||^2 + ridge * ||b_{1:}||^2.
    const double s = std::sqrt(ridge);
    Matrix xa(x.rows() + cols - 1, cols);
    Matrix ya(x.rows() + cols - 1, 3);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) xa(r, c) = x(r, c);
      for (std::size_t k = 0; k < 3; ++k) ya(r, k) = targets(r, k);
    }
    for (std::size_t c = 1; c < cols; ++c) xa(x.rows() + c - 1, c) = s;
    beta = least_squares_solve(xa, ya);
  }

  MlrModel model;
  model.channels = design.channels;
  model.max_lag = design.max_lag;
  model.ridge = ridge;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    model.intercepts[axis] = beta(0, axis);
    model.weights[axis].resize(cols - 1);
    for (std::size_t j = 1; j < cols; ++j) model.weights[axis][j - 1] = beta(j, axis);
  }
  return model;
}

Matrix predict(const MlrModel& model, const DesignMatrix& design) {
  const std::size_t cols = 1 + model.channels * (model.max_lag + 1);
  if (design.x.cols() != cols) {
    throw data_error("mlr predict: design has " + std::to_string(design.x.cols()) +
                     " columns, model expects " + std::to_string(cols));
  }
  Matrix out(design.x.rows(), 3);
  for (std::size_t r = 0; r < design.x.rows(); ++r) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      double acc = model.intercepts[axis] * design.x(r, 0);
      for (std::size_t j = 1; j < cols; ++j) {
        acc += model.weights[axis][j - 1] * design.x(r, j);
      }
      out(r, axis) = acc;
    }
  }
  return out;
}

void save_mlr(const MlrModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write mlr model to " + path);
  out << "# channels=" << model.channels << " lag=" << model.max_lag
      << " ridge=" << format_double(model.ridge) << "\n";
  out << "axis,channel,lag,value\n";
  for (std::size_t axis = 0; axis < 3; ++axis) {
    out << kAxisNames[axis] << ",-1,-1," << format_double(model.intercepts[axis]) << "\n";
    for (std::size_t c = 0; c < model.channels; ++c) {
      for (std::size_t l = 0; l <= model.max_lag; ++l) {
        out << kAxisNames[axis] << ',' << c << ',' << l << ','
            << format_double(model.weights[axis][c * (model.max_lag + 1) + l]) << "\n";
      }
    }
  }
}

MlrModel load_mlr(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open mlr model " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty model file");
  line = trim(line);
  MlrModel model;
  {
    if (line.rfind("# channels=", 0) != 0) throw data_error(path + ": malformed model header");
    std::vector<std::string> parts = split(line.substr(2), ' ');
    if (parts.size() != 3) throw data_error(path + ": malformed model header");
    model.channels = static_cast<std::size_t>(parse_int(parts[0].substr(9), path));
    model.max_lag = static_cast<std::size_t>(parse_int(parts[1].substr(4), path));
    model.ridge = parse_double(parts[2].substr(6), path);
  }
  for (auto& w : model.weights) w.assign(model.channels * (model.max_lag + 1), 0.0);
  if (!std::getline(in, line) || trim(line) != "axis,channel,lag,value") {
    throw data_error(path + ": missing column header");
  }
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(lineno);
    std::vector<std::string> parts = split(t, ',');
    if (parts.size() != 4) throw data_error(ctx + ": expected 4 fields");
    std::size_t axis = 3;
    for (std::size_t a = 0; a < 3; ++a) {
      if (parts[0] == kAxisNames[a]) axis = a;
    }
    if (axis == 3) throw data_error(ctx + ": unknown axis '" + parts[0] + "'");
    const long long chan = parse_int(parts[1], ctx);
    const long long lag = parse_int(parts[2], ctx);
    const double value = parse_double(parts[3], ctx);
    if (chan == -1 && lag == -1) {
      model.intercepts[axis] = value;
      continue;
    }
    if (chan < 0 || static_cast<std::size_t>(chan) >= model.channels || lag < 0 ||
        static_cast<std::size_t>(lag) > model.max_lag) {
      throw data_error(ctx + ": coefficient index outside model shape");
    }
    model.weights[axis][static_cast<std::size_t>(chan) * (model.max_lag + 1) +
                        static_cast<std::size_t>(lag)] = value;
  }
  return model;
}

} // namespace ekr
