#include "ekr/preprocess.hpp"

#include "ekr/errors.hpp"
#include "ekr/util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

namespace ekr {

const std::vector<BandSpec>& canonical_bands() {
  static const std::vector<BandSpec> bands = {
      {"delta", 0.5, 3.0},
      {"theta", 3.0, 7.0},
      {"alpha", 7.0, 12.0},
      {"entire", 0.5, 12.0},
  };
  return bands;
}

BandSpec band_by_name(const std::string& name) {
  for (const auto& b : canonical_bands()) {
    if (b.name == name) return b;
  }
  throw data_error("unknown band '" + name + "' (expected delta, theta, alpha, or entire)");
}

namespace {

// Unity-DC-gain Hamming-windowed sinc low-pass.
std::vector<double> lowpass_kernel(double cutoff_hz, double rate_hz, std::size_t taps) {
  const std::size_t m = (taps - 1) / 2;
  const double f = cutoff_hz / rate_hz;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double k = static_cast<double>(n) - static_cast<double>(m);
    const double x = 2.0 * std::numbers::pi * f * k;
    const double sinc = (k == 0.0) ? 2.0 * f : std::sin(x) / (std::numbers::pi * k);
    const double w =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                               static_cast<double>(taps - 1));
    h[n] = sinc * w;
    sum += h[n];
  }
  for (double& v : h) v /= sum;
  return h;
}

void check_taps(std::size_t taps) {
  if (taps < 3 || taps % 2 == 0) {
    throw data_error("filter taps must be an odd count >= 3, got " + std::to_string(taps));
  }
}

} // namespace

std::vector<double> bandpass_kernel(const FilterSpec& spec, double rate_hz) {
  check_taps(spec.taps);
  if (!(0.0 < spec.low_hz && spec.low_hz < spec.high_hz && spec.high_hz < rate_hz / 2.0)) {
    throw data_error("band (" + format_double(spec.low_hz) + ", " + format_double(spec.high_hz) +
                     ") Hz invalid for rate " + format_double(rate_hz) + " Hz");
  }
  const std::vector<double> hi = lowpass_kernel(spec.high_hz, rate_hz, spec.taps);
  const std::vector<double> lo = lowpass_kernel(spec.low_hz, rate_hz, spec.taps);
  std::vector<double> band(spec.taps);
  for (std::size_t n = 0; n < spec.taps; ++n) band[n] = hi[n] - lo[n];
  return band;
}

std::vector<double> filter_zero_phase(const std::vector<double>& x,
                                      const std::vector<double>& kernel) {
  check_taps(kernel.size());
  const std::size_t m = (kernel.size() - 1) / 2;
  const std::size_t len = x.size();
  if (len <= m) {
    throw data_error("signal of length " + std::to_string(len) +
                     " too short for a " + std::to_string(kernel.size()) + "-tap filter");
  }
  auto extended = [&](std::ptrdiff_t i) {
    if (i < 0) i = -i;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(len) - 1;
    if (i > last) i = 2 * last - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> y(len);
  for (std::size_t t = 0; t < len; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      acc += kernel[k] * extended(static_cast<std::ptrdiff_t>(t + k) -
                                  static_cast<std::ptrdiff_t>(m));
    }
    y[t] = acc;
  }
  return y;
}

TrialRecord resample(const TrialRecord& trial, double target_hz) {
  if (target_hz <= 0.0) throw data_error("resample: target rate must be positive");
  if (trial.sample_rate == target_hz) return trial;
  const double ratio = trial.sample_rate / target_hz;
  const double rounded = std::nearbyint(ratio);
  if (ratio < 1.0 || std::fabs(ratio - rounded) > 1e-9) {
    throw data_error("resample: rate " + format_double(trial.sample_rate) +
                     " Hz is not an integer multiple of target " + format_double(target_hz) +
                     " Hz");
  }
  const std::size_t q = static_cast<std::size_t>(rounded);
  const std::size_t out_len = (trial.samples() + q - 1) / q;

  // Anti-alias taps scale with the decimation factor so the transition width
  // stays a fixed fraction of the target band.
  const std::size_t taps = 40 * q + 1;
  const std::vector<double> aa = lowpass_kernel(0.45 * target_hz, trial.sample_rate, taps);

  TrialRecord out = trial;
  out.sample_rate = target_hz;
  out.cue_index = trial.cue_index / q;
  out.onset_index = trial.onset_index / q;
  out.eeg = Matrix(trial.channels(), out_len);
  out.kinematics = Matrix(3, out_len);
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    std::vector<double> chan(trial.samples());
    for (std::size_t t = 0; t < trial.samples(); ++t) chan[t] = trial.eeg(c, t);
    const std::vector<double> smoothed = filter_zero_phase(chan, aa);
    for (std::size_t t = 0; t < out_len; ++t) out.eeg(c, t) = smoothed[t * q];
  }
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t t = 0; t < out_len; ++t) out.kinematics(k, t) = trial.kinematics(k, t * q);
  }
  return out;
}

TrialRecord bandpass(const TrialRecord& trial, const FilterSpec& spec) {
  const std::vector<double> kernel = bandpass_kernel(spec, trial.sample_rate);
  TrialRecord out = trial;
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    std::vector<double> chan(trial.samples());
    for (std::size_t t = 0; t < trial.samples(); ++t) chan[t] = trial.eeg(c, t);
    const std::vector<double> filtered = filter_zero_phase(chan, kernel);
    for (std::size_t t = 0; t < trial.samples(); ++t) out.eeg(c, t) = filtered[t];
  }
  return out;
}

TrialRecord common_average_reference(const TrialRecord& trial) {
  const std::size_t nchan = trial.channels();
  if (nchan < 2) throw data_error("common average reference needs at least 2 channels");
  TrialRecord out = trial;
  for (std::size_t t = 0; t < trial.samples(); ++t) {
    double mean = 0.0;
    for (std::size_t c = 0; c < nchan; ++c) mean += trial.eeg(c, t);
    mean /= static_cast<double>(nchan);
    for (std::size_t c = 0; c < nchan; ++c) out.eeg(c, t) = trial.eeg(c, t) - mean;
  }
  return out;
}

ChannelStats compute_stats(const Dataset& train) {
  if (train.trials.empty()) throw data_error("compute_stats: empty training partition");
  const std::size_t nchan = train.trials.front().channels();
  std::size_t total = 0;
  for (const auto& trial : train.trials) total += trial.samples();
  if (total < 2) throw data_error("compute_stats: need at least 2 training samples");

  ChannelStats stats;
  stats.mean.assign(nchan, 0.0);
  stats.std_dev.assign(nchan, 0.0);
  for (const auto& trial : train.trials) {
    for (std::size_t c = 0; c < nchan; ++c)
      for (std::size_t t = 0; t < trial.samples(); ++t) stats.mean[c] += trial.eeg(c, t);
  }
  for (std::size_t c = 0; c < nchan; ++c) stats.mean[c] /= static_cast<double>(total);
  for (const auto& trial : train.trials) {
    for (std::size_t c = 0; c < nchan; ++c) {
      for (std::size_t t = 0; t < trial.samples(); ++t) {
        const double d = trial.eeg(c, t) - stats.mean[c];
        stats.std_dev[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < nchan; ++c) {
    const double var = stats.std_dev[c] / static_cast<double>(total - 1);
    if (var <= 0.0) {
      const std::string name = c < train.montage.size() ? train.montage[c] : std::to_string(c);
      throw data_error("compute_stats: training channel '" + name + "' is constant");
    }
    stats.std_dev[c] = std::sqrt(var);
  }
  return stats;
}

TrialRecord standardize(const TrialRecord& trial, const ChannelStats& stats) {
  if (stats.mean.size() != trial.channels() || stats.std_dev.size() != trial.channels()) {
    throw data_error("standardize: stats hold " + std::to_string(stats.mean.size()) +
                     " channels, trial has " + std::to_string(trial.channels()));
  }
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    if (!(stats.std_dev[c] > 0.0)) throw data_error("standardize: nonpositive std for channel " +
                                                    std::to_string(c));
  }
  TrialRecord out = trial;
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    const double inv = 1.0 / stats.std_dev[c];
    for (std::size_t t = 0; t < trial.samples(); ++t) {
      out.eeg(c, t) = (trial.eeg(c, t) - stats.mean[c]) * inv;
    }
  }
  return out;
}

const std::vector<std::string>& motor_subset_18() {
  static const std::vector<std::string> names = {
      "Fp1", "F7", "FC1", "T7", "C3", "TP9", "CP1", "P7", "O1",
      "Fz",  "Cz", "Pz",  "F8", "FC6", "C4", "CP6", "P8", "O2"};
  return names;
}

TrialRecord select_channels(const TrialRecord& trial,
                            const std::vector<std::string>& montage,
                            const std::vector<std::string>& names) {
  if (montage.size() != trial.channels()) {
    throw data_error("select_channels: montage size disagrees with trial channel count");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < montage.size(); ++c) index.emplace(montage[c], c);
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> rows;
  rows.reserve(names.size());
  for (const auto& name : names) {
    if (!seen.insert(name).second) {
      throw data_error("select_channels: duplicate channel '" + name + "'");
    }
    auto it = index.find(name);
    if (it == index.end()) throw data_error("select_channels: unknown channel '" + name + "'");
    rows.push_back(it->second);
  }
  TrialRecord out = trial;
  out.eeg = Matrix(rows.size(), trial.samples());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t t = 0; t < trial.samples(); ++t) out.eeg(r, t) = trial.eeg(rows[r], t);
  }
  return out;
}

Dataset select_channels(const Dataset& ds, const std::vector<std::string>& names) {
  Dataset out;
  out.montage = names;
  out.trials.reserve(ds.trials.size());
  for (const auto& trial : ds.trials) {
    out.trials.push_back(select_channels(trial, ds.montage, names));
  }
  return out;
}

std::optional<TrialRecord> gate_and_align(const TrialRecord& trial, double max_rt_ms) {
  if (trial.onset_index < trial.cue_index) {
    throw data_error("gate_and_align: onset precedes cue");
  }
  if (trial.onset_index >= trial.samples()) {
    throw data_error("gate_and_align: onset outside trial span");
  }
  const double rt_ms = static_cast<double>(trial.onset_index - trial.cue_index) /
                       trial.sample_rate * 1000.0;
  if (rt_ms > max_rt_ms) return std::nullopt;

  const std::size_t len = trial.samples() - trial.onset_index;
  TrialRecord out = trial;
  out.eeg = Matrix(trial.channels(), len);
  out.kinematics = Matrix(3, len);
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    for (std::size_t t = 0; t < len; ++t) out.eeg(c, t) = trial.eeg(c, trial.cue_index + t);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t t = 0; t < len; ++t) {
      out.kinematics(k, t) = trial.kinematics(k, trial.onset_index + t);
    }
  }
  out.onset_index = trial.onset_index - trial.cue_index;
  out.cue_index = 0;
  return out;
}

} // namespace ekr
