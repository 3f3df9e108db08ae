#include "ekr/pipeline.hpp"

#include "ekr/errors.hpp"
#include "ekr/eval.hpp"
#include "ekr/mlr.hpp"
#include "ekr/preprocess.hpp"
#include "ekr/sourceloc.hpp"
#include "ekr/util.hpp"
#include "ekr/wpd.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace ekr {

namespace {

const std::vector<std::string> kKnownModels = {"mlr", "mlp", "cnnlstm", "wpd-cnnlstm"};
const std::vector<std::string> kKnownBands = {"delta", "theta", "alpha", "entire", "none"};

void announce(const fs::path& path) { std::cout << "wrote " << path.string() << "\n"; }

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  for (const std::string& part : split(value, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw data_error("config key '" + key + "' expects on/off, got '" + value + "'");
}

std::size_t parse_count(const std::string& value, const std::string& key) {
  const long long v = parse_int(value, "config key '" + key + "'");
  if (v < 0) throw data_error("config key '" + key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

void set_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const std::string ctx = "config key '" + key + "'";
  if (key == "dataset") {
    cfg.dataset_dir = value;
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(value, ctx));
  } else if (key == "band" || key == "bands") {
    cfg.bands = parse_list(value);
  } else if (key == "taps") {
    cfg.taps = parse_count(value, key);
  } else if (key == "target_hz") {
    cfg.target_hz = parse_double(value, ctx);
  } else if (key == "max_rt_ms") {
    cfg.max_rt_ms = parse_double(value, ctx);
  } else if (key == "channels") {
    cfg.channels = value;
  } else if (key == "car") {
    cfg.car = parse_bool(value, key);
  } else if (key == "split.train") {
    cfg.split.train = parse_double(value, ctx);
  } else if (key == "split.val") {
    cfg.split.val = parse_double(value, ctx);
  } else if (key == "split.test") {
    cfg.split.test = parse_double(value, ctx);
  } else if (key == "models") {
    cfg.models = parse_list(value);
  } else if (key == "lag") {
    cfg.lag = parse_count(value, key);
  } else if (key == "ridge") {
    cfg.ridge = parse_double(value, ctx);
  } else if (key == "frame_len") {
    cfg.frame_len = parse_count(value, key);
  } else if (key == "seq_len") {
    cfg.seq_len = parse_count(value, key);
  } else if (key == "wpd.depth") {
    cfg.wpd_depth = parse_count(value, key);
  } else if (key == "wpd.frame_len") {
    cfg.wpd_frame_len = parse_count(value, key);
  } else if (key == "wpd.seq_len") {
    cfg.wpd_seq_len = parse_count(value, key);
  } else if (key == "stride") {
    cfg.stride = parse_count(value, key);
  } else if (key == "train.epochs") {
    cfg.train.epochs = parse_count(value, key);
  } else if (key == "train.batch") {
    cfg.train.batch_size = parse_count(value, key);
  } else if (key == "train.lr") {
    cfg.train.adam.lr = parse_double(value, ctx);
  } else if (key == "synth.channels") {
    cfg.synth.channels = parse_count(value, key);
    cfg.use_synth = true;
  } else if (key == "synth.trials") {
    cfg.synth.trials = parse_count(value, key);
    cfg.use_synth = true;
  } else if (key == "synth.samples") {
    cfg.synth.samples_per_trial = parse_count(value, key);
    cfg.use_synth = true;
  } else if (key == "synth.lag") {
    cfg.synth.lag_order = parse_count(value, key);
    cfg.use_synth = true;
  } else if (key == "synth.noise_std") {
    cfg.synth.noise_std = parse_double(value, ctx);
    cfg.use_synth = true;
  } else if (key == "synth.nonlinearity") {
    if (value == "none") {
      cfg.synth.nonlinearity = Nonlinearity::none;
    } else if (value == "tanh-mix") {
      cfg.synth.nonlinearity = Nonlinearity::tanh_mix;
    } else {
      throw data_error("config key 'synth.nonlinearity' expects none or tanh-mix");
    }
    cfg.use_synth = true;
  } else if (key == "synth.subjects") {
    cfg.synth.subjects = parse_count(value, key);
    cfg.use_synth = true;
  } else if (key == "synth.rate") {
    cfg.synth.sample_rate = parse_double(value, ctx);
    cfg.use_synth = true;
  } else if (key == "leadfield") {
    cfg.leadfield_path = value;
  } else if (key == "positions") {
    cfg.positions_path = value;
  } else if (key == "rank_k") {
    cfg.rank_k = parse_count(value, key);
  } else if (key == "latency_threshold") {
    cfg.latency_threshold = parse_double(value, ctx);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(value, ctx);
  } else {
    throw data_error("unknown config key '" + key + "'");
  }
  cfg.raw[key] = value;
}

void validate(const PipelineConfig& cfg) {
  if (cfg.models.empty()) throw data_error("config: at least one model is required");
  for (const auto& m : cfg.models) {
    if (!contains(kKnownModels, m)) {
      throw data_error("config: unknown model '" + m + "' (mlr, mlp, cnnlstm, wpd-cnnlstm)");
    }
  }
  if (cfg.bands.empty()) throw data_error("config: at least one band is required");
  for (const auto& b : cfg.bands) {
    if (!contains(kKnownBands, b)) {
      throw data_error("config: unknown band '" + b + "' (delta, theta, alpha, entire, none)");
    }
  }
  if (!cfg.dataset_dir.empty() && cfg.use_synth) {
    throw data_error("config: give either dataset or synth.*, not both");
  }
  if (cfg.stride == 0) throw data_error("config: stride must be at least 1");
  if (cfg.train.batch_size == 0) throw data_error("config: train.batch must be at least 1");
  if (cfg.leadfield_path.empty() != cfg.positions_path.empty()) {
    throw data_error("config: leadfield and positions must be given together");
  }
}

} // namespace

PipelineConfig parse_config_text(const std::string& text, const std::string& context) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw data_error(context + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw data_error(context + ":" + std::to_string(lineno) + ": empty key");
    }
    set_key(cfg, key, value);
  }
  cfg.synth.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value) {
  set_key(cfg, key, value);
  cfg.synth.seed = cfg.seed;
  validate(cfg);
}

namespace {

std::string fingerprint_string(const PipelineConfig& cfg, bool with_train) {
  std::ostringstream os;
  os << "source=" << (cfg.use_synth ? "synth" : cfg.dataset_dir) << ';';
  if (cfg.use_synth) {
    os << "synth=" << cfg.synth.channels << ',' << cfg.synth.trials << ','
       << cfg.synth.samples_per_trial << ',' << cfg.synth.lag_order << ','
       << format_double(cfg.synth.noise_std) << ','
       << (cfg.synth.nonlinearity == Nonlinearity::none ? "none" : "tanh-mix") << ','
       << cfg.synth.subjects << ',' << format_double(cfg.synth.sample_rate) << ';';
  }
  os << "seed=" << cfg.seed << ';';
  os << "bands=" << join(cfg.bands, ",") << ';';
  os << "taps=" << cfg.taps << ";target_hz=" << format_double(cfg.target_hz)
     << ";max_rt_ms=" << format_double(cfg.max_rt_ms) << ";channels=" << cfg.channels
     << ";car=" << (cfg.car ? "on" : "off") << ';';
  os << "split=" << format_double(cfg.split.train) << ',' << format_double(cfg.split.val) << ','
     << format_double(cfg.split.test) << ';';
  if (with_train) {
    os << "models=" << join(cfg.models, ",") << ';';
    os << "lag=" << cfg.lag << ";ridge=" << format_double(cfg.ridge)
       << ";frame=" << cfg.frame_len << ";seq=" << cfg.seq_len << ";wpd=" << cfg.wpd_depth << ','
       << cfg.wpd_frame_len << ',' << cfg.wpd_seq_len << ";stride=" << cfg.stride << ';';
    os << "train=" << cfg.train.epochs << ',' << cfg.train.batch_size << ','
       << format_double(cfg.train.adam.lr) << ';';
  }
  return os.str();
}

} // namespace

std::uint64_t prep_fingerprint(const PipelineConfig& cfg) {
  return fnv1a64(fingerprint_string(cfg, false));
}

std::uint64_t train_fingerprint(const PipelineConfig& cfg) {
  return fnv1a64(fingerprint_string(cfg, true));
}

namespace {

fs::path data_dir(const PipelineConfig& cfg) {
  return cfg.use_synth ? fs::path(cfg.out_dir) / "data" : fs::path(cfg.dataset_dir);
}

fs::path prepared_dir(const PipelineConfig& cfg) { return fs::path(cfg.out_dir) / "prepared"; }
fs::path models_dir(const PipelineConfig& cfg) { return fs::path(cfg.out_dir) / "models"; }
fs::path reports_dir(const PipelineConfig& cfg) { return fs::path(cfg.out_dir) / "reports"; }

std::vector<std::string> resolve_channel_list(const PipelineConfig& cfg,
                                              const std::vector<std::string>& montage) {
  if (cfg.channels == "all") return montage;
  if (cfg.channels == "paper18" || cfg.channels == "motor18") return motor_subset_18();
  return parse_list(cfg.channels);
}

struct Manifest {
  std::uint64_t fingerprint = 0;
  std::vector<std::string> bands;
  std::map<std::pair<int, int>, std::string> assignment;
};

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw data_error("missing prep manifest " + path.string() + " (run the prep step first)");
  }
  Manifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    if (key == "prep_fingerprint") {
      try {
        manifest.fingerprint = std::stoull(value, nullptr, 16);
      } catch (const std::exception&) {
        throw data_error(ctx + ": malformed fingerprint");
      }
    } else if (key == "bands") {
      manifest.bands = parse_list(value);
    } else if (key.rfind("partition.", 0) == 0) {
      const std::vector<std::string> parts = split(key, '.');
      if (parts.size() != 3) throw data_error(ctx + ": malformed partition key");
      const int subject = static_cast<int>(parse_int(parts[1], ctx));
      const int trial = static_cast<int>(parse_int(parts[2], ctx));
      manifest.assignment[{subject, trial}] = value;
    }
  }
  return manifest;
}

// The gated trial list split per subject so every subject contributes to
// every partition; blocks are contiguous in trial order within a subject.
std::map<std::pair<int, int>, std::string> assign_partitions(const Dataset& ds,
                                                             const SplitRatios& ratios) {
  std::map<int, Dataset> by_subject;
  for (const auto& trial : ds.trials) {
    Dataset& sub = by_subject[trial.subject_id];
    sub.montage = ds.montage;
    sub.trials.push_back(trial);
  }
  std::map<std::pair<int, int>, std::string> assignment;
  for (auto& [subject, sub] : by_subject) {
    std::array<Dataset, 3> parts;
    try {
      parts = split_dataset(sub, ratios);
    } catch (const data_error& e) {
      throw data_error("subject " + std::to_string(subject) + ": " + e.what());
    }
    static const char* names[3] = {"train", "val", "test"};
    for (int p = 0; p < 3; ++p) {
      for (const auto& trial : parts[p].trials) {
        assignment[{subject, trial.trial_id}] = names[p];
      }
    }
  }
  return assignment;
}

Dataset collect_partition(const Dataset& ds,
                          const std::map<std::pair<int, int>, std::string>& assignment,
                          const std::string& partition, int subject = -1) {
  Dataset out;
  out.montage = ds.montage;
  for (const auto& trial : ds.trials) {
    if (subject >= 0 && trial.subject_id != subject) continue;
    const auto it = assignment.find({trial.subject_id, trial.trial_id});
    if (it == assignment.end()) {
      throw data_error("trial subject " + std::to_string(trial.subject_id) + " trial " +
                       std::to_string(trial.trial_id) + " missing from the prep manifest");
    }
    if (it->second == partition) out.trials.push_back(trial);
  }
  return out;
}

std::string hex16(std::uint64_t v) { return to_hex(v); }

} // namespace

void cmd_synth(const PipelineConfig& cfg) {
  if (!cfg.use_synth) throw data_error("synth: config has no synth.* keys");
  auto [ds, gt] = generate_synthetic(cfg.synth);
  const fs::path dir = data_dir(cfg);
  write_dataset(ds, dir.string());
  for (const auto& trial : ds.trials) {
    char name[64];
    std::snprintf(name, sizeof(name), "s%03d_t%04d.csv", trial.subject_id, trial.trial_id);
    announce(dir / name);
  }

  const fs::path gt_path = dir / "groundtruth.txt";
  std::ofstream out(gt_path, std::ios::trunc);
  if (!out) throw data_error("cannot write " + gt_path.string());
  out << "channels = " << gt.channels << "\n";
  out << "lag_order = " << gt.lag_order << "\n";
  out << "nonlinearity = " << (gt.nonlinearity == Nonlinearity::none ? "none" : "tanh-mix")
      << "\n";
  out << "noise_std = " << format_double(gt.noise_std) << "\n";
  static const char* axes[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    out << "raw_min." << axes[a] << " = " << format_double(gt.raw_min[a]) << "\n";
    out << "raw_max." << axes[a] << " = " << format_double(gt.raw_max[a]) << "\n";
  }
  if (gt.nonlinearity == Nonlinearity::none) {
    for (int a = 0; a < 3; ++a) {
      out << "intercept." << axes[a] << " = " << format_double(gt.effective_intercept[a]) << "\n";
      std::string row;
      for (std::size_t j = 0; j < gt.effective_weights[a].size(); ++j) {
        if (j) row += ',';
        row += format_double(gt.effective_weights[a][j]);
      }
      out << "weights." << axes[a] << " = " << row << "\n";
    }
  }
  out.close();
  announce(gt_path);
}

void cmd_prep(const PipelineConfig& cfg) {
  const fs::path source = data_dir(cfg);
  Dataset raw = load_dataset(source.string());
  if (raw.trials.empty()) throw data_error("prep: dataset " + source.string() + " is empty");

  // Rate conversion first, then per-band filtering below.
  Dataset resampled;
  resampled.montage = raw.montage;
  for (const auto& trial : raw.trials) {
    try {
      resampled.trials.push_back(resample(trial, cfg.target_hz));
    } catch (const std::exception& e) {
      throw data_error("prep: subject " + std::to_string(trial.subject_id) + " trial " +
                       std::to_string(trial.trial_id) + ": " + e.what());
    }
  }

  const std::vector<std::string> selected = resolve_channel_list(cfg, resampled.montage);

  struct Excluded {
    int subject, trial;
    double rt_ms;
  };
  std::vector<Excluded> excluded;

  // Gating is band-independent: decide once on the resampled trials.
  std::vector<bool> keep(resampled.trials.size(), true);
  for (std::size_t i = 0; i < resampled.trials.size(); ++i) {
    const auto& trial = resampled.trials[i];
    const double rt_ms = static_cast<double>(trial.onset_index - trial.cue_index) /
                         trial.sample_rate * 1000.0;
    if (rt_ms > cfg.max_rt_ms) {
      keep[i] = false;
      excluded.push_back({trial.subject_id, trial.trial_id, rt_ms});
    }
  }

  const fs::path outdir = prepared_dir(cfg);
  fs::create_directories(outdir);

  std::map<std::pair<int, int>, std::string> assignment;
  std::map<std::string, ChannelStats> band_stats;
  bool first_band = true;
  for (const std::string& band_name : cfg.bands) {
    Dataset band_ds;
    for (std::size_t i = 0; i < resampled.trials.size(); ++i) {
      if (!keep[i]) continue;
      const auto& trial = resampled.trials[i];
      try {
        TrialRecord cur = trial;
        if (band_name != "none") {
          const BandSpec band = band_by_name(band_name);
          cur = bandpass(cur, {band.low_hz, band.high_hz, cfg.taps});
        }
        if (cfg.car) cur = common_average_reference(cur);
        cur = select_channels(cur, resampled.montage, selected);
        auto gated = gate_and_align(cur, cfg.max_rt_ms);
        if (!gated) {
          throw data_error("gating disagreed with the rt scan");
        }
        band_ds.trials.push_back(std::move(*gated));
      } catch (const std::exception& e) {
        throw data_error("prep: subject " + std::to_string(trial.subject_id) + " trial " +
                         std::to_string(trial.trial_id) + ": " + e.what());
      }
    }
    band_ds.montage = selected;
    if (band_ds.trials.empty()) throw data_error("prep: every trial was excluded by gating");

    if (first_band) {
      assignment = assign_partitions(band_ds, cfg.split);
      first_band = false;
    }
    const Dataset train_part = collect_partition(band_ds, assignment, "train");
    if (train_part.trials.empty()) throw data_error("prep: training partition is empty");
    const ChannelStats stats = compute_stats(train_part);
    band_stats[band_name] = stats;

    Dataset standardized;
    standardized.montage = band_ds.montage;
    for (const auto& trial : band_ds.trials) {
      standardized.trials.push_back(standardize(trial, stats));
    }
    const fs::path band_dir = outdir / band_name;
    write_dataset(standardized, band_dir.string());
    for (const auto& trial : standardized.trials) {
      char name[64];
      std::snprintf(name, sizeof(name), "s%03d_t%04d.csv", trial.subject_id, trial.trial_id);
      announce(band_dir / name);
    }
  }

  const fs::path manifest_path = outdir / "manifest.txt";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw data_error("cannot write manifest " + manifest_path.string());
  out << "prep_fingerprint = " << hex16(prep_fingerprint(cfg)) << "\n";
  out << "source = " << source.string() << "\n";
  out << "target_hz = " << format_double(cfg.target_hz) << "\n";
  out << "taps = " << cfg.taps << "\n";
  out << "car = " << (cfg.car ? "on" : "off") << "\n";
  out << "channels = " << join(selected, ",") << "\n";
  out << "max_rt_ms = " << format_double(cfg.max_rt_ms) << "\n";
  out << "split.train = " << format_double(cfg.split.train) << "\n";
  out << "split.val = " << format_double(cfg.split.val) << "\n";
  out << "split.test = " << format_double(cfg.split.test) << "\n";
  out << "bands = " << join(cfg.bands, ",") << "\n";
  for (const std::string& band_name : cfg.bands) {
    if (band_name == "none") {
      out << "band.none.low_hz = -\n";
      out << "band.none.high_hz = -\n";
      continue;
    }
    const BandSpec band = band_by_name(band_name);
    out << "band." << band_name << ".low_hz = " << format_double(band.low_hz) << "\n";
    out << "band." << band_name << ".high_hz = " << format_double(band.high_hz) << "\n";
  }
  out << "trials.input = " << raw.trials.size() << "\n";
  out << "trials.kept = " << raw.trials.size() - excluded.size() << "\n";
  out << "trials.excluded = " << excluded.size() << "\n";
  for (std::size_t i = 0; i < excluded.size(); ++i) {
    out << "excluded." << i + 1 << " = subject=" << excluded[i].subject
        << " trial=" << excluded[i].trial << " rt_ms=" << format_double(excluded[i].rt_ms)
        << " (rt>" << format_double(cfg.max_rt_ms) << "ms)\n";
  }
  for (const auto& [key, partition] : assignment) {
    out << "partition." << key.first << "." << key.second << " = " << partition << "\n";
  }
  for (const auto& [band_name, stats] : band_stats) {
    for (std::size_t c = 0; c < stats.mean.size(); ++c) {
      out << "stats." << band_name << "." << selected[c] << ".mean = "
          << format_double(stats.mean[c]) << "\n";
      out << "stats." << band_name << "." << selected[c] << ".std = "
          << format_double(stats.std_dev[c]) << "\n";
    }
  }
  out.close();
  announce(manifest_path);
}

void cmd_localize(const PipelineConfig& cfg) {
  if (cfg.leadfield_path.empty()) {
    throw data_error("localize: config needs leadfield and positions paths");
  }
  const LeadField lf = load_lead_field(cfg.leadfield_path, cfg.positions_path);
  const Dataset ds = load_dataset(data_dir(cfg).string());
  if (ds.trials.empty()) throw data_error("localize: dataset is empty");
  if (ds.trials.front().channels() != lf.sensors()) {
    throw data_error("localize: dataset has " + std::to_string(ds.trials.front().channels()) +
                     " channels, lead field has " + std::to_string(lf.sensors()) + " sensors");
  }

  std::size_t total = 0;
  for (const auto& trial : ds.trials) total += trial.samples();
  Matrix data(lf.sensors(), total);
  std::size_t offset = 0;
  for (const auto& trial : ds.trials) {
    for (std::size_t c = 0; c < trial.channels(); ++c) {
      for (std::size_t t = 0; t < trial.samples(); ++t) data(c, offset + t) = trial.eeg(c, t);
    }
    offset += trial.samples();
  }

  const double alpha = cfg.alpha >= 0.0 ? cfg.alpha : default_alpha(lf);
  const SourceMap map = sloreta_inverse(lf, data, alpha);

  double peak = 0.0;
  for (double v : map.power.values()) peak = std::max(peak, v);
  if (peak == 0.0) {
    std::cout << "warning: source power is identically zero; "
                 "ranking falls back to montage order\n";
  }

  const std::size_t k = std::min(cfg.rank_k, lf.sensors());
  const std::vector<std::string> ranked =
      rank_channels(map, lf, {0, map.power.cols()}, k);

  const fs::path dir = fs::path(cfg.out_dir) / "localize";
  fs::create_directories(dir);
  const fs::path chan_path = dir / "channels.csv";
  {
    std::ofstream out(chan_path, std::ios::trunc);
    if (!out) throw data_error("cannot write " + chan_path.string());
    out << "rank,channel\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) out << i + 1 << ',' << ranked[i] << "\n";
  }
  announce(chan_path);

  const fs::path timeline_path = dir / "timeline.csv";
  {
    std::vector<std::string> labels = lf.region_labels;
    if (labels.empty()) labels.assign(lf.dipoles(), "all");
    const ActivationTimeline timeline = detect_latency(map, labels, cfg.latency_threshold);
    std::ofstream out(timeline_path, std::ios::trunc);
    if (!out) throw data_error("cannot write " + timeline_path.string());
    out << "region,first_crossing_sample\n";
    for (std::size_t i = 0; i < timeline.regions.size(); ++i) {
      out << timeline.regions[i] << ',';
      if (timeline.first_crossing[i]) {
        out << *timeline.first_crossing[i];
      } else {
        out << "none";
      }
      out << "\n";
    }
  }
  announce(timeline_path);
}

namespace {

struct PreparedBand {
  Dataset all;
  std::map<std::pair<int, int>, std::string> assignment;
};

PreparedBand load_prepared_band(const PipelineConfig& cfg, const Manifest& manifest,
                                const std::string& band) {
  PreparedBand out;
  out.all = load_dataset((prepared_dir(cfg) / band).string());
  if (out.all.trials.empty()) {
    throw data_error("prepared band '" + band + "' is empty; rerun prep");
  }
  out.assignment = manifest.assignment;
  return out;
}

void stack_lagged(const Dataset& ds, std::size_t lag, DesignMatrix& design, Matrix& targets) {
  std::size_t total_rows = 0;
  for (const auto& trial : ds.trials) {
    if (trial.samples() <= lag) {
      throw data_error("trial too short for lag " + std::to_string(lag));
    }
    total_rows += trial.samples() - lag;
  }
  const std::size_t n = ds.trials.front().channels();
  const std::size_t cols = 1 + n * (lag + 1);
  design.channels = n;
  design.max_lag = lag;
  design.x = Matrix(total_rows, cols);
  targets = Matrix(total_rows, 3);
  std::size_t row = 0;
  for (const auto& trial : ds.trials) {
    const DesignMatrix part = build_lagged(trial.eeg, {lag});
    const Matrix y = lagged_targets(trial.kinematics, lag);
    for (std::size_t r = 0; r < part.x.rows(); ++r, ++row) {
      for (std::size_t c = 0; c < cols; ++c) design.x(row, c) = part.x(r, c);
      for (std::size_t k = 0; k < 3; ++k) targets(row, k) = y(r, k);
    }
  }
}

void mlp_tensors(const Dataset& ds, std::size_t lag, std::size_t stride, Tensor& x, Tensor& y) {
  const std::size_t n = ds.trials.front().channels();
  const std::size_t dim = n * (lag + 1);
  std::size_t count = 0;
  for (const auto& trial : ds.trials) {
    if (trial.samples() <= lag) continue;
    count += (trial.samples() - lag + stride - 1) / stride;
  }
  if (count == 0) throw data_error("no usable samples for the mlp (trials too short?)");
  x = Tensor({count, dim});
  y = Tensor({count, 3});
  std::size_t row = 0;
  for (const auto& trial : ds.trials) {
    if (trial.samples() <= lag) continue;
    for (std::size_t t = lag; t < trial.samples(); t += stride) {
      double* xr = &x.data[row * dim];
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t l = 0; l <= lag; ++l) xr[c * (lag + 1) + l] = trial.eeg(c, t - l);
      }
      for (std::size_t k = 0; k < 3; ++k) y.data[row * 3 + k] = trial.kinematics(k, t);
      ++row;
    }
  }
}

// Sequences of seq_len frames, each frame a channels x frame_len window, the
// last frame ending at the target sample.
void cnn_tensors(const Dataset& ds, std::size_t frame_len, std::size_t seq_len,
                 std::size_t stride, Tensor& x, Tensor& y) {
  const std::size_t n = ds.trials.front().channels();
  const std::size_t t_min = frame_len - 1 + (seq_len - 1);
  std::size_t count = 0;
  for (const auto& trial : ds.trials) {
    if (trial.samples() <= t_min) continue;
    count += (trial.samples() - t_min + stride - 1) / stride;
  }
  if (count == 0) throw data_error("no usable samples for the cnn-lstm (trials too short?)");
  x = Tensor({count, seq_len, n, frame_len});
  y = Tensor({count, 3});
  std::size_t row = 0;
  for (const auto& trial : ds.trials) {
    if (trial.samples() <= t_min) continue;
    for (std::size_t t = t_min; t < trial.samples(); t += stride) {
      for (std::size_t s = 0; s < seq_len; ++s) {
        const std::size_t end = t - (seq_len - 1 - s);
        const std::size_t begin = end - frame_len + 1;
        double* frame = &x.data[((row * seq_len + s) * n) * frame_len];
        for (std::size_t c = 0; c < n; ++c) {
          for (std::size_t i = 0; i < frame_len; ++i) {
            frame[c * frame_len + i] = trial.eeg(c, begin + i);
          }
        }
      }
      for (std::size_t k = 0; k < 3; ++k) y.data[row * 3 + k] = trial.kinematics(k, t);
      ++row;
    }
  }
}

// Same framing on the leaf-feature matrix; feature frame f covers original
// samples [f*2^depth, (f+1)*2^depth), so a window ending at f targets the
// kinematic sample (f+1)*2^depth - 1. Windows advance one feature frame at
// a time: the packet transform already decimates by 2^depth.
void wpd_tensors(const Dataset& ds, std::size_t depth, std::size_t frame_len,
                 std::size_t seq_len, Tensor& x, Tensor& y) {
  const std::size_t stride = 1;
  const std::size_t block = std::size_t{1} << depth;
  const std::size_t n = ds.trials.front().channels();
  const std::size_t feat_rows = n * block;
  const std::size_t f_min = frame_len - 1 + (seq_len - 1);
  const WaveletFilterPair wavelet = wavelet_db1();

  struct TrialFeatures {
    Matrix features;
    const TrialRecord* trial;
  };
  std::vector<TrialFeatures> prepared;
  std::size_t count = 0;
  for (const auto& trial : ds.trials) {
    const std::size_t usable = (trial.samples() / block) * block;
    if (usable == 0) continue;
    Matrix window(n, usable);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t t = 0; t < usable; ++t) window(c, t) = trial.eeg(c, t);
    }
    TrialFeatures tf{leaf_features(window, depth, wavelet), &trial};
    const std::size_t frames = tf.features.cols();
    if (frames > f_min) count += (frames - f_min + stride - 1) / stride;
    prepared.push_back(std::move(tf));
  }
  if (count == 0) {
    throw data_error("no usable samples for the wpd-cnnlstm (trials too short?)");
  }
  x = Tensor({count, seq_len, feat_rows, frame_len});
  y = Tensor({count, 3});
  std::size_t row = 0;
  for (const auto& tf : prepared) {
    const std::size_t frames = tf.features.cols();
    if (frames <= f_min) continue;
    for (std::size_t f = f_min; f < frames; f += stride) {
      for (std::size_t s = 0; s < seq_len; ++s) {
        const std::size_t end = f - (seq_len - 1 - s);
        const std::size_t begin = end - frame_len + 1;
        double* frame = &x.data[((row * seq_len + s) * feat_rows) * frame_len];
        for (std::size_t c = 0; c < feat_rows; ++c) {
          for (std::size_t i = 0; i < frame_len; ++i) {
            frame[c * frame_len + i] = tf.features(c, begin + i);
          }
        }
      }
      const std::size_t t_orig = (f + 1) * block - 1;
      for (std::size_t k = 0; k < 3; ++k) {
        y.data[row * 3 + k] = tf.trial->kinematics(k, t_orig);
      }
      ++row;
    }
  }
}

Matrix forward_in_batches(ModelGraph& model, const Tensor& x, std::size_t batch_size) {
  const std::size_t n = x.shape[0];
  const std::size_t stride = x.size() / n;
  Matrix out(n, 3);
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    std::vector<std::size_t> shape = x.shape;
    shape[0] = end - begin;
    Tensor xb(shape);
    std::copy(&x.data[begin * stride], &x.data[end * stride], xb.data.begin());
    const Tensor pred = model.forward(xb);
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t k = 0; k < 3; ++k) out(r, k) = pred.data[(r - begin) * 3 + k];
    }
  }
  return out;
}

Matrix tensor_targets(const Tensor& y) {
  Matrix out(y.shape[0], 3);
  for (std::size_t r = 0; r < y.shape[0]; ++r) {
    for (std::size_t k = 0; k < 3; ++k) out(r, k) = y.data[r * 3 + k];
  }
  return out;
}

std::array<double, 3> per_axis_pcc(const Matrix& truth, const Matrix& pred) {
  std::array<double, 3> out{};
  for (std::size_t a = 0; a < 3; ++a) {
    std::vector<double> t(truth.rows()), p(truth.rows());
    for (std::size_t r = 0; r < truth.rows(); ++r) {
      t[r] = truth(r, a);
      p[r] = pred(r, a);
    }
    out[a] = pcc(t, p);
  }
  return out;
}

std::uint64_t model_seed(const PipelineConfig& cfg, const std::string& model,
                         const std::string& band) {
  return cfg.seed ^ fnv1a64(model + "/" + band);
}

std::vector<std::pair<std::string, std::string>> model_band_pairs(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& model : cfg.models) {
    if (model == "wpd-cnnlstm") {
      if (!contains(cfg.bands, "entire")) {
        throw data_error("wpd-cnnlstm needs the entire band in the band list");
      }
      pairs.emplace_back(model, "entire");
    } else {
      for (const auto& band : cfg.bands) pairs.emplace_back(model, band);
    }
  }
  return pairs;
}

void write_history(const TrainHistory& history, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write history " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    out << e + 1 << ',' << format_double(history.train_loss[e]) << ',';
    if (e < history.val_loss.size()) out << format_double(history.val_loss[e]);
    out << "\n";
  }
}

} // namespace

void cmd_train(const PipelineConfig& cfg) {
  const Manifest manifest = read_manifest(prepared_dir(cfg) / "manifest.txt");
  if (manifest.fingerprint != prep_fingerprint(cfg)) {
    throw data_error("prep manifest was produced by a different configuration; rerun prep");
  }

  const fs::path dir = models_dir(cfg);
  fs::create_directories(dir);
  std::vector<std::string> summary_lines;

  std::map<std::string, PreparedBand> cache;
  auto band_data = [&](const std::string& band) -> PreparedBand& {
    auto it = cache.find(band);
    if (it == cache.end()) {
      it = cache.emplace(band, load_prepared_band(cfg, manifest, band)).first;
    }
    return it->second;
  };

  static const char* axes[3] = {"x", "y", "z"};
  for (const auto& [model_name, band] : model_band_pairs(cfg)) {
    PreparedBand& data = band_data(band);
    const Dataset train_ds = collect_partition(data.all, data.assignment, "train");
    const Dataset val_ds = collect_partition(data.all, data.assignment, "val");
    if (train_ds.trials.empty()) throw data_error("training partition is empty");

    std::array<double, 3> train_pcc{};
    fs::path model_path;
    if (model_name == "mlr") {
      DesignMatrix design;
      Matrix targets;
      stack_lagged(train_ds, cfg.lag, design, targets);
      const MlrModel model = fit(design, targets, cfg.ridge);
      model_path = dir / ("mlr_" + band + ".csv");
      save_mlr(model, model_path.string());
      announce(model_path);
      train_pcc = per_axis_pcc(targets, predict(model, design));
    } else {
      Tensor x, y, xv, yv;
      std::vector<std::size_t> input_shape;
      ModelGraph graph;
      if (model_name == "mlp") {
        mlp_tensors(train_ds, cfg.lag, cfg.stride, x, y);
        if (!val_ds.trials.empty()) mlp_tensors(val_ds, cfg.lag, cfg.stride, xv, yv);
        graph = build_mlp(x.shape[1]);
        input_shape = {x.shape[1]};
      } else if (model_name == "cnnlstm") {
        cnn_tensors(train_ds, cfg.frame_len, cfg.seq_len, cfg.stride, x, y);
        if (!val_ds.trials.empty()) {
          cnn_tensors(val_ds, cfg.frame_len, cfg.seq_len, cfg.stride, xv, yv);
        }
        graph = build_cnn_lstm(x.shape[2], cfg.frame_len, cfg.seq_len);
        input_shape = {x.shape[1], x.shape[2], x.shape[3]};
      } else {
        wpd_tensors(train_ds, cfg.wpd_depth, cfg.wpd_frame_len, cfg.wpd_seq_len, x, y);
        if (!val_ds.trials.empty()) {
          wpd_tensors(val_ds, cfg.wpd_depth, cfg.wpd_frame_len, cfg.wpd_seq_len, xv, yv);
        }
        graph = build_cnn_lstm(x.shape[2], cfg.wpd_frame_len, cfg.wpd_seq_len);
        input_shape = {x.shape[1], x.shape[2], x.shape[3]};
      }

      const std::uint64_t seed = model_seed(cfg, model_name, band);
      Rng init_rng(seed);
      graph.init_params(init_rng);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const TrainHistory history = train(graph, x, y, xv, yv, tc);

      model_path = dir / (model_name + "_" + band + ".ckpt");
      save_checkpoint(graph, model_name, input_shape, seed, tc.epochs, model_path.string());
      announce(model_path);
      const fs::path history_path = dir / (model_name + "_" + band + "_history.csv");
      write_history(history, history_path);
      announce(history_path);

      train_pcc = per_axis_pcc(tensor_targets(y), forward_in_batches(graph, x,
                                                                     cfg.train.batch_size));
    }
    for (int a = 0; a < 3; ++a) {
      summary_lines.push_back("train_pcc." + model_name + "." + band + "." + axes[a] + " = " +
                              format_double(train_pcc[a]));
    }
  }

  const fs::path summary_path = dir / "summary.txt";
  std::ofstream out(summary_path, std::ios::trunc);
  if (!out) throw data_error("cannot write summary " + summary_path.string());
  out << "prep_fingerprint = " << hex16(prep_fingerprint(cfg)) << "\n";
  out << "train_fingerprint = " << hex16(train_fingerprint(cfg)) << "\n";
  for (const auto& line : summary_lines) out << line << "\n";
  out.close();
  announce(summary_path);
}

void cmd_eval(const PipelineConfig& cfg) {
  const Manifest manifest = read_manifest(prepared_dir(cfg) / "manifest.txt");
  if (manifest.fingerprint != prep_fingerprint(cfg)) {
    throw data_error("prep manifest was produced by a different configuration; rerun prep");
  }
  {
    const fs::path summary_path = models_dir(cfg) / "summary.txt";
    std::ifstream in(summary_path);
    if (!in) {
      throw data_error("missing training summary " + summary_path.string() +
                       " (run the train step first)");
    }
    std::string line;
    bool ok = false;
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.rfind("train_fingerprint = ", 0) == 0) {
        ok = line.substr(20) == hex16(train_fingerprint(cfg));
        break;
      }
    }
    if (!ok) {
      throw data_error("training summary was produced by a different configuration; "
                       "rerun train");
    }
  }

  const fs::path dir = reports_dir(cfg);
  fs::create_directories(dir);

  std::map<std::string, PreparedBand> cache;
  auto band_data = [&](const std::string& band) -> PreparedBand& {
    auto it = cache.find(band);
    if (it == cache.end()) {
      it = cache.emplace(band, load_prepared_band(cfg, manifest, band)).first;
    }
    return it->second;
  };

  std::set<int> subject_set;
  for (const auto& [key, partition] : manifest.assignment) {
    if (partition == "test") subject_set.insert(key.first);
  }
  if (subject_set.empty()) {
    throw data_error("eval: no test trials in the prep manifest; adjust the split ratios");
  }
  const std::vector<int> subjects(subject_set.begin(), subject_set.end());

  std::vector<TrackSet> cells;
  for (const auto& [model_name, band] : model_band_pairs(cfg)) {
    PreparedBand& data = band_data(band);

    MlrModel mlr_model;
    Checkpoint ckpt;
    if (model_name == "mlr") {
      mlr_model = load_mlr((models_dir(cfg) / ("mlr_" + band + ".csv")).string());
    } else {
      ckpt = load_checkpoint((models_dir(cfg) / (model_name + "_" + band + ".ckpt")).string());
      if (ckpt.arch != model_name) {
        throw data_error("checkpoint architecture '" + ckpt.arch + "' does not match '" +
                         model_name + "'");
      }
    }

    for (int subject : subjects) {
      const Dataset test_ds = collect_partition(data.all, data.assignment, "test", subject);
      if (test_ds.trials.empty()) continue;

      TrackSet cell;
      cell.subject = subject;
      cell.method = model_name;
      cell.band = band;
      if (model_name == "mlr") {
        DesignMatrix design;
        stack_lagged(test_ds, cfg.lag, design, cell.truth);
        cell.predicted = predict(mlr_model, design);
      } else {
        Tensor x, y;
        if (model_name == "mlp") {
          mlp_tensors(test_ds, cfg.lag, cfg.stride, x, y);
        } else if (model_name == "cnnlstm") {
          cnn_tensors(test_ds, cfg.frame_len, cfg.seq_len, cfg.stride, x, y);
        } else {
          wpd_tensors(test_ds, cfg.wpd_depth, cfg.wpd_frame_len, cfg.wpd_seq_len, x, y);
        }
        cell.truth = tensor_targets(y);
        cell.predicted = forward_in_batches(ckpt.model, x, cfg.train.batch_size);
      }
      cells.push_back(std::move(cell));
    }
  }

  const PccReport report = band_sweep(cells);
  const fs::path pcc_path = dir / "pcc.csv";
  save_pcc_report(report, pcc_path.string());
  announce(pcc_path);

  // Significance tests compare methods on one reference band: entire when
  // present, the first configured band otherwise.
  const std::string ref_band = contains(cfg.bands, "entire") ? "entire" : cfg.bands.front();
  static const char* axes[3] = {"x", "y", "z"};
  std::vector<TTestRow> rows;
  if (cfg.models.size() >= 2 && subjects.size() >= 2) {
    auto values_for = [&](const std::string& method, const std::string& axis) {
      std::vector<double> out;
      for (int subject : subjects) {
        for (const auto& e : report.entries) {
          if (e.subject == subject && e.method == method && e.band == ref_band &&
              (axis.empty() || e.axis == axis)) {
            out.push_back(e.value);
          }
        }
      }
      return out;
    };
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
      for (std::size_t j = i + 1; j < cfg.models.size(); ++j) {
        const std::string& a = cfg.models[i];
        const std::string& b = cfg.models[j];
        if ((a == "wpd-cnnlstm" || b == "wpd-cnnlstm") && ref_band != "entire") continue;
        const std::string pair = a + " vs " + b;
        for (const char* axis : axes) {
          const std::vector<double> va = values_for(a, axis);
          const std::vector<double> vb = values_for(b, axis);
          if (va.size() < 2 || vb.size() < 2) continue;
          rows.push_back({pair, axis, two_sample_ttest(va, vb)});
        }
        const std::vector<double> va = values_for(a, "");
        const std::vector<double> vb = values_for(b, "");
        if (va.size() >= 2 && vb.size() >= 2) {
          rows.push_back({pair, "overall", two_sample_ttest(va, vb)});
        }
      }
    }
  }
  const fs::path ttest_path = dir / "ttest.csv";
  save_ttest_csv(rows, ttest_path.string());
  announce(ttest_path);

  // One trajectory bundle per method on the reference band, first subject
  // with test data.
  for (const auto& [model_name, band] : model_band_pairs(cfg)) {
    if (band != (model_name == "wpd-cnnlstm" ? "entire" : ref_band)) continue;
    for (const auto& cell : cells) {
      if (cell.method != model_name || cell.band != band) continue;
      const std::string base =
          (dir / ("traj_" + model_name + "_" + band + "_s" + std::to_string(cell.subject)))
              .string();
      for (const std::string& path : export_trajectories(cell.truth, cell.predicted, base)) {
        announce(path);
      }
      break;
    }
  }
}

void cmd_all(const PipelineConfig& cfg) {
  if (cfg.use_synth) cmd_synth(cfg);
  cmd_prep(cfg);
  if (!cfg.leadfield_path.empty()) {
    cmd_localize(cfg);
  } else {
    std::cout << "localize skipped (no leadfield configured)\n";
  }
  cmd_train(cfg);
  cmd_eval(cfg);
}

} // namespace ekr
