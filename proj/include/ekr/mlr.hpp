#pragma once

#include "ekr/matrix.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace ekr {

struct LagSpec {
  std::size_t max_lag = 10;
};

// Lagged regression design: one row per sample t in [L, T), columns are a
// leading 1 followed by V_n[t-l] ordered channel-major then lag, so the
// column count is 1 + channels*(L+1).
struct DesignMatrix {
  Matrix x;
  std::size_t channels = 0;
  std::size_t max_lag = 0;
};

// Per-axis intercept a and weight vector b over (channel, lag), the same
// channel-major-then-lag layout as DesignMatrix columns.
struct MlrModel {
  std::size_t channels = 0;
  std::size_t max_lag = 0;
  double ridge = 0.0;
  std::array<double, 3> intercepts{};
  std::array<std::vector<double>, 3> weights;
};

DesignMatrix build_lagged(const Matrix& eeg, const LagSpec& spec);

// Kinematics columns [L, T) transposed to rows, aligned with build_lagged.
Matrix lagged_targets(const Matrix& kinematics, std::size_t max_lag);

// Least squares through orthogonal factorization, one fit per axis. ridge
// adds lambda to the squared-column term of every non-intercept column.
MlrModel fit(const DesignMatrix& design, const Matrix& targets, double ridge = 1e-8);

Matrix predict(const MlrModel& model, const DesignMatrix& design);

void save_mlr(const MlrModel& model, const std::string& path);
MlrModel load_mlr(const std::string& path);

} // namespace ekr
