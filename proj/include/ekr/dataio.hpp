#ifndef EKR_DATAIO_HPP
#define EKR_DATAIO_HPP

#include "ekr/matrix.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ekr {

// One grasp-and-lift trial. EEG rows follow the montage order; kinematics
// rows are the x, y, z position tracks, normalized to [0, 1]. After
// alignment both matrices describe the same sample clock.
struct TrialRecord {
  int subject_id{0};
  int trial_id{0};
  Matrix eeg;        // channels x samples, microvolts before standardization
  Matrix kinematics; // 3 x samples
  double sample_rate{0.0};
  std::size_t cue_index{0};
  std::size_t onset_index{0};
  std::string load_label;
  std::string friction_label;

  std::size_t samples() const { return eeg.cols(); }
  std::size_t channels() const { return eeg.rows(); }
};

struct Dataset {
  std::vector<TrialRecord> trials;
  std::vector<std::string> montage;

  // The montage is undefined until at least one trial has been loaded.
  const std::vector<std::string>& montage_or_throw() const;
};

enum class Nonlinearity { none, tanh_mix };

struct SynthSpec {
  std::size_t channels{6};
  std::size_t trials{8};
  std::size_t samples_per_trial{600};
  std::size_t lag_order{10};
  double noise_std{0.0};
  Nonlinearity nonlinearity{Nonlinearity::none};
  std::uint64_t seed{0};
  std::size_t subjects{1};
  double sample_rate{100.0};
};

// Generating coefficients behind a synthetic dataset. For the plain linear
// map the kinematics are, for t >= lag_order, exactly
//   kin[axis][t] = effective_intercept[axis]
//                + sum_n sum_l effective_weights[axis][n*(L+1)+l] * eeg[n][t-l]
// with the affine squash into [0,1] already folded in. Lags reaching before
// the trial start are read as zero.
struct GroundTruth {
  std::size_t channels{0};
  std::size_t lag_order{0};
  Nonlinearity nonlinearity{Nonlinearity::none};
  double noise_std{0.0};
  std::array<std::vector<double>, 3> primary_weights;   // unit norm, channel-major then lag
  std::array<std::vector<double>, 3> secondary_weights; // used only by tanh_mix
  std::array<double, 3> raw_min{};                      // affine squash record
  std::array<double, 3> raw_max{};
  std::array<std::vector<double>, 3> effective_weights;
  std::array<double, 3> effective_intercept{};
};

// Loads every *.csv trial file under path; trials come back ordered by
// (subject_id, trial_id). Errors name the offending file and line.
Dataset load_dataset(const std::string& path);

void write_dataset(const Dataset& ds, const std::string& path);

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthSpec& spec);

// Contiguous trial-level split, never within a trial. Validation and test
// sizes are floor-rounded; the remainder goes to the training block.
struct SplitRatios {
  double train{0.70};
  double val{0.15};
  double test{0.15};
};

std::array<Dataset, 3> split_dataset(const Dataset& ds, const SplitRatios& ratios);

// The standard 32-channel recording montage the named channel subsets assume.
const std::vector<std::string>& standard_montage_32();

} // namespace ekr

#endif
