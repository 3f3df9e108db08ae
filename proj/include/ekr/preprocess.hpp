#pragma once

#include "ekr/dataio.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ekr {

// Band-pass design parameters. taps must be odd so the linear-phase delay
// (taps-1)/2 is an integral number of samples.
struct FilterSpec {
  double low_hz = 0.5;
  double high_hz = 12.0;
  std::size_t taps = 401;
};

// Named analysis band. band_by_name resolves the four canonical bands.
struct BandSpec {
  std::string name;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

const std::vector<BandSpec>& canonical_bands();
BandSpec band_by_name(const std::string& name);

// Per-channel training-partition statistics used by standardize.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std_dev;
};

// Symmetric FIR band-pass kernel (Hamming-windowed sinc, difference of two
// unity-DC-gain low-passes). Exposed so tests can probe the frequency
// response directly.
std::vector<double> bandpass_kernel(const FilterSpec& spec, double rate_hz);

// Applies a symmetric kernel with zero net phase. The input is extended by
// half the kernel length on each side by whole-sample reflection, so the
// output has the same length as the input. Requires length > (taps-1)/2.
std::vector<double> filter_zero_phase(const std::vector<double>& x,
                                      const std::vector<double>& kernel);

// Anti-alias low-pass at 0.45*target_hz, then keep every q-th sample where
// q = rate/target_hz must be a positive integer. Kinematics are subsampled
// without filtering so they stay inside [0,1]; cue/onset indices divide by q.
TrialRecord resample(const TrialRecord& trial, double target_hz);

// Band-passes every EEG channel; kinematics pass through untouched.
TrialRecord bandpass(const TrialRecord& trial, const FilterSpec& spec);

// Subtracts the across-channel mean from every sample.
TrialRecord common_average_reference(const TrialRecord& trial);

// Pooled mean and sample standard deviation (T-1 denominator) per channel
// over every sample of every trial. A constant channel is a hard error.
ChannelStats compute_stats(const Dataset& train);

TrialRecord standardize(const TrialRecord& trial, const ChannelStats& stats);

// Rows reordered/reduced to `names`, which must be distinct members of
// `montage`.
TrialRecord select_channels(const TrialRecord& trial,
                            const std::vector<std::string>& montage,
                            const std::vector<std::string>& names);
Dataset select_channels(const Dataset& ds, const std::vector<std::string>& names);

// The default 18-channel subset over sensorimotor and peripheral sites.
const std::vector<std::string>& motor_subset_18();

// Drops the trial when the cue-to-onset reaction time exceeds max_rt_ms.
// Otherwise kinematics are cut to [onset, end), EEG to [cue, cue + same
// length), so both tracks cover equally many samples; indices are rebased so
// cue = 0.
std::optional<TrialRecord> gate_and_align(const TrialRecord& trial, double max_rt_ms = 700.0);

} // namespace ekr
