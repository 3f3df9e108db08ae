#include "ekr/dataio.hpp"

#include "ekr/errors.hpp"
#include "ekr/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace ekr {

const std::vector<std::string>& Dataset::montage_or_throw() const {
  if (montage.empty()) {
    throw data_error("montage undefined: dataset holds no trials");
  }
  return montage;
}

const std::vector<std::string>& standard_montage_32() {
  static const std::vector<std::string> names = {
      "Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5",
      "FC1", "FC2", "FC6", "T7",  "C3",  "Cz",  "C4",  "T8",
      "TP9", "CP5", "CP1", "CP2", "CP6", "TP10", "P7", "P3",
      "Pz",  "P4",  "P8",  "PO9", "O1",  "Oz",  "O2",  "PO10"};
  return names;
}

namespace {

std::string header_field(const std::vector<std::string>& tokens, std::size_t idx,
                         const std::string& key, const std::string& context) {
  if (idx >= tokens.size()) throw data_error(context + ": missing header field '" + key + "'");
  const std::string& tok = tokens[idx];
  const std::string prefix = key + "=";
  if (tok.rfind(prefix, 0) != 0) {
    throw data_error(context + ": expected '" + key + "=...', got '" + tok + "'");
  }
  return tok.substr(prefix.size());
}

void check_label(const std::string& label, const std::string& what) {
  if (label.empty()) throw data_error(what + " label is empty");
  for (char c : label) {
    if (c == ' ' || c == ',' || c == '\t') {
      throw data_error(what + " label '" + label + "' contains whitespace or comma");
    }
  }
}

std::pair<TrialRecord, std::vector<std::string>> load_trial_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open trial file " + path.string());
  const std::string ctx = path.string();

  std::string line;
  if (!std::getline(in, line)) throw data_error(ctx + ":1: missing header line");
  line = trim(line);
  if (line.empty() || line[0] != '#') throw data_error(ctx + ":1: missing '#' header line");

  std::vector<std::string> tokens;
  {
    std::istringstream iss(line.substr(1));
    std::string tok;
    while (iss >> tok) tokens.push_back(tok);
  }
  TrialRecord trial;
  trial.subject_id = static_cast<int>(parse_int(header_field(tokens, 0, "subject", ctx), ctx));
  trial.trial_id = static_cast<int>(parse_int(header_field(tokens, 1, "trial", ctx), ctx));
  const long long rate = parse_int(header_field(tokens, 2, "rate", ctx), ctx);
  const long long cue = parse_int(header_field(tokens, 3, "cue", ctx), ctx);
  const long long onset = parse_int(header_field(tokens, 4, "onset", ctx), ctx);
  trial.load_label = header_field(tokens, 5, "load", ctx);
  trial.friction_label = header_field(tokens, 6, "friction", ctx);
  if (rate <= 0) throw data_error(ctx + ":1: rate must be positive");
  if (cue < 0 || onset < 0) throw data_error(ctx + ":1: cue/onset must be nonnegative");
  trial.sample_rate = static_cast<double>(rate);
  trial.cue_index = static_cast<std::size_t>(cue);
  trial.onset_index = static_cast<std::size_t>(onset);

  if (!std::getline(in, line)) throw data_error(ctx + ":2: missing channel-name line");
  std::vector<std::string> cols = split(trim(line), ',');
  if (cols.size() < 4) throw data_error(ctx + ":2: need at least one channel plus px,py,pz");
  const std::size_t nchan = cols.size() - 3;
  if (cols[nchan] != "px" || cols[nchan + 1] != "py" || cols[nchan + 2] != "pz") {
    throw data_error(ctx + ":2: last three columns must be px,py,pz");
  }
  std::vector<std::string> montage(cols.begin(), cols.begin() + nchan);

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> parts = split(t, ',');
    if (parts.size() != cols.size()) {
      throw data_error(ctx + ":" + std::to_string(lineno) + ": ragged row, expected " +
                       std::to_string(cols.size()) + " values, got " + std::to_string(parts.size()));
    }
    std::vector<double> vals(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      vals[i] = parse_double(parts[i], ctx + ":" + std::to_string(lineno));
      if (!std::isfinite(vals[i])) {
        throw data_error(ctx + ":" + std::to_string(lineno) + ": non-finite value");
      }
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = vals[nchan + k];
      if (v < 0.0 || v > 1.0) {
        throw data_error(ctx + ":" + std::to_string(lineno) + ": kinematics value " +
                         format_double(v) + " outside [0,1]");
      }
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw data_error(ctx + ": trial has no samples");

  const std::size_t nsamp = rows.size();
  if (trial.cue_index > trial.onset_index || trial.onset_index >= nsamp) {
    throw data_error(ctx + ": cue/onset indices violate cue <= onset < samples");
  }

  trial.eeg = Matrix(nchan, nsamp);
  trial.kinematics = Matrix(3, nsamp);
  for (std::size_t t = 0; t < nsamp; ++t) {
    for (std::size_t c = 0; c < nchan; ++c) trial.eeg(c, t) = rows[t][c];
    for (std::size_t k = 0; k < 3; ++k) trial.kinematics(k, t) = rows[t][nchan + k];
  }
  return {std::move(trial), std::move(montage)};
}

} // namespace

Dataset load_dataset(const std::string& path) {
  if (!fs::exists(path) || !fs::is_directory(path)) {
    throw data_error("dataset directory not found: " + path);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  for (const auto& f : files) {
    auto [trial, montage] = load_trial_file(f);
    if (ds.trials.empty()) {
      ds.montage = montage;
    } else if (montage != ds.montage) {
      throw data_error(f.string() + ": montage differs from the rest of the dataset");
    }
    ds.trials.push_back(std::move(trial));
  }
  std::stable_sort(ds.trials.begin(), ds.trials.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::pair(a.subject_id, a.trial_id) < std::pair(b.subject_id, b.trial_id);
  });
  for (std::size_t i = 1; i < ds.trials.size(); ++i) {
    const auto& a = ds.trials[i - 1];
    const auto& b = ds.trials[i];
    if (a.subject_id == b.subject_id && a.trial_id == b.trial_id) {
      throw data_error("duplicate trial identity: subject " + std::to_string(a.subject_id) +
                       " trial " + std::to_string(a.trial_id));
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  fs::create_directories(path);
  for (const auto& trial : ds.trials) {
    if (trial.eeg.rows() != ds.montage.size()) {
      throw data_error("write_dataset: trial channel count disagrees with montage");
    }
    if (trial.kinematics.rows() != 3 || trial.kinematics.cols() != trial.eeg.cols()) {
      throw data_error("write_dataset: kinematics shape must be 3 x samples");
    }
    const double rate_rounded = std::nearbyint(trial.sample_rate);
    if (trial.sample_rate <= 0.0 || rate_rounded != trial.sample_rate) {
      throw data_error("write_dataset: sample rate must be a positive integer Hz");
    }
    check_label(trial.load_label, "load");
    check_label(trial.friction_label, "friction");

    char name[64];
    std::snprintf(name, sizeof(name), "s%03d_t%04d.csv", trial.subject_id, trial.trial_id);
    std::ofstream out(fs::path(path) / name, std::ios::trunc);
    if (!out) throw data_error("cannot write trial file in " + path);

    out << "# subject=" << trial.subject_id << " trial=" << trial.trial_id
        << " rate=" << static_cast<long long>(rate_rounded)
        << " cue=" << trial.cue_index << " onset=" << trial.onset_index
        << " load=" << trial.load_label << " friction=" << trial.friction_label << "\n";
    out << join(ds.montage, ",") << ",px,py,pz\n";
    for (std::size_t t = 0; t < trial.samples(); ++t) {
      for (std::size_t c = 0; c < trial.channels(); ++c) {
        if (c) out << ',';
        out << format_double(trial.eeg(c, t));
      }
      for (std::size_t k = 0; k < 3; ++k) out << ',' << format_double(trial.kinematics(k, t));
      out << '\n';
    }
  }
}

namespace {

std::vector<double> unit_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double norm2 = 0.0;
  for (double& x : w) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : w) x *= inv;
  return w;
}

double lagged_response(const Matrix& eeg, const std::vector<double>& w,
                       std::size_t lag_order, std::size_t t) {
  const std::size_t nchan = eeg.rows();
  double acc = 0.0;
  for (std::size_t n = 0; n < nchan; ++n) {
    for (std::size_t l = 0; l <= lag_order; ++l) {
      if (l > t) break; // lags before the trial start read as zero
      acc += w[n * (lag_order + 1) + l] * eeg(n, t - l);
    }
  }
  return acc;
}

} // namespace

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthSpec& spec) {
  if (spec.noise_std < 0.0) throw data_error("generate_synthetic: noise_std must be nonnegative");
  if (spec.channels == 0 || spec.trials == 0) {
    throw data_error("generate_synthetic: channels and trials must be positive");
  }
  if (spec.samples_per_trial <= spec.lag_order) {
    throw data_error("generate_synthetic: samples_per_trial must exceed lag_order");
  }
  if (spec.subjects == 0 || spec.subjects > spec.trials) {
    throw data_error("generate_synthetic: subjects must be in [1, trials]");
  }
  if (spec.sample_rate <= 0.0) throw data_error("generate_synthetic: sample_rate must be positive");

  Rng rng(spec.seed);
  const std::size_t n_weights = spec.channels * (spec.lag_order + 1);

  GroundTruth gt;
  gt.channels = spec.channels;
  gt.lag_order = spec.lag_order;
  gt.nonlinearity = spec.nonlinearity;
  gt.noise_std = spec.noise_std;
  for (int axis = 0; axis < 3; ++axis) gt.primary_weights[axis] = unit_weights(rng, n_weights);
  for (int axis = 0; axis < 3; ++axis) gt.secondary_weights[axis] = unit_weights(rng, n_weights);

  Dataset ds;
  if (spec.channels == 32) {
    ds.montage = standard_montage_32();
  } else {
    for (std::size_t c = 0; c < spec.channels; ++c) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "S%02zu", c + 1);
      ds.montage.emplace_back(buf);
    }
  }

  // Subjects take contiguous trial blocks; the first (trials % subjects)
  // subjects absorb the remainder.
  std::vector<std::size_t> per_subject(spec.subjects, spec.trials / spec.subjects);
  for (std::size_t s = 0; s < spec.trials % spec.subjects; ++s) per_subject[s] += 1;

  const std::size_t T = spec.samples_per_trial;
  for (std::size_t s = 0, made = 0; s < spec.subjects; ++s) {
    for (std::size_t k = 0; k < per_subject[s]; ++k, ++made) {
      TrialRecord trial;
      trial.subject_id = static_cast<int>(s + 1);
      trial.trial_id = static_cast<int>(k + 1);
      trial.sample_rate = spec.sample_rate;
      trial.cue_index = 0;
      trial.onset_index = 0;
      trial.load_label = (made % 2 == 0) ? "light" : "heavy";
      trial.friction_label = (made % 3 == 0) ? "low" : "high";
      trial.eeg = Matrix(spec.channels, T);
      for (std::size_t c = 0; c < spec.channels; ++c)
        for (std::size_t t = 0; t < T; ++t) trial.eeg(c, t) = rng.normal();
      trial.kinematics = Matrix(3, T);
      ds.trials.push_back(std::move(trial));
    }
  }

  // Raw responses, then observation noise, then a global affine squash per
  // axis so the [0,1] kinematics invariant holds across the whole dataset.
  std::vector<Matrix> raw(ds.trials.size());
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    raw[i] = Matrix(3, T);
    const Matrix& eeg = ds.trials[i].eeg;
    for (int axis = 0; axis < 3; ++axis) {
      for (std::size_t t = 0; t < T; ++t) {
        const double lin1 = lagged_response(eeg, gt.primary_weights[axis], spec.lag_order, t);
        double value;
        if (spec.nonlinearity == Nonlinearity::none) {
          value = lin1;
        } else {
          const double lin2 = lagged_response(eeg, gt.secondary_weights[axis], spec.lag_order, t);
          const double a = std::tanh(3.0 * lin1);
          const double b = std::tanh(2.0 * lin2);
          value = a + 1.5 * b * b;
        }
        raw[i](axis, t) = value;
      }
    }
  }
  if (spec.noise_std > 0.0) {
    for (auto& r : raw)
      for (double& v : r.values()) v += spec.noise_std * rng.normal();
  }

  for (int axis = 0; axis < 3; ++axis) {
    double lo = raw[0](axis, 0);
    double hi = lo;
    for (const auto& r : raw) {
      for (std::size_t t = 0; t < T; ++t) {
        lo = std::min(lo, r(axis, t));
        hi = std::max(hi, r(axis, t));
      }
    }
    if (hi - lo < 1e-12) throw numeric_error("generate_synthetic: degenerate kinematic range");
    gt.raw_min[axis] = lo;
    gt.raw_max[axis] = hi;
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < ds.trials.size(); ++i) {
      for (std::size_t t = 0; t < T; ++t) {
        ds.trials[i].kinematics(axis, t) = (raw[i](axis, t) - lo) * scale;
      }
    }
    if (spec.nonlinearity == Nonlinearity::none) {
      gt.effective_weights[axis].resize(n_weights);
      for (std::size_t j = 0; j < n_weights; ++j) {
        gt.effective_weights[axis][j] = gt.primary_weights[axis][j] * scale;
      }
      gt.effective_intercept[axis] = -lo * scale;
    }
  }
  return {std::move(ds), std::move(gt)};
}

std::array<Dataset, 3> split_dataset(const Dataset& ds, const SplitRatios& ratios) {
  const double r[3] = {ratios.train, ratios.val, ratios.test};
  for (double x : r) {
    if (x < 0.0) throw data_error("split_dataset: ratios must be nonnegative");
  }
  const double sum = r[0] + r[1] + r[2];
  if (std::fabs(sum - 1.0) > 1e-9) throw data_error("split_dataset: ratios must sum to 1");

  const std::size_t n = ds.trials.size();
  std::size_t nonzero = 0;
  for (double x : r) nonzero += (x > 0.0) ? 1 : 0;
  if (n < nonzero) {
    throw data_error("split_dataset: fewer trials (" + std::to_string(n) +
                     ") than nonzero partitions (" + std::to_string(nonzero) + ")");
  }

  const std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[1]));
  const std::size_t n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[2]));
  const std::size_t n_train = n - n_val - n_test;

  std::array<Dataset, 3> out;
  const std::size_t bounds[4] = {0, n_train, n_train + n_val, n};
  for (int p = 0; p < 3; ++p) {
    out[p].montage = ds.montage;
    out[p].trials.assign(ds.trials.begin() + static_cast<std::ptrdiff_t>(bounds[p]),
                         ds.trials.begin() + static_cast<std::ptrdiff_t>(bounds[p + 1]));
  }
  return out;
}

} // namespace ekr
