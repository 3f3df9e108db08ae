#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ekr/dataio.hpp"
#include "ekr/errors.hpp"
#include "ekr/pipeline.hpp"
#include "ekr/preprocess.hpp"
#include "ekr/sourceloc.hpp"
#include "ekr/util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ekr;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("ekr_pipe_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrialRecord hand_trial(int subject, int trial, std::size_t cue, std::size_t onset,
                       std::uint64_t seed) {
  TrialRecord t;
  t.subject_id = subject;
  t.trial_id = trial;
  t.sample_rate = 100.0;
  t.cue_index = cue;
  t.onset_index = onset;
  t.load_label = "light";
  t.friction_label = "low";
  const std::size_t samples = 300;
  t.eeg = Matrix(3, samples);
  t.kinematics = Matrix(3, samples);
  Rng rng(seed);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t s = 0; s < samples; ++s) t.eeg(c, s) = rng.normal();
  }
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t s = 0; s < samples; ++s) t.kinematics(k, s) = rng.uniform();
  }
  return t;
}

} // namespace

TEST_CASE("config parsing applies defaults, comments and overrides") {
  const PipelineConfig cfg = parse_config_text(
      "# a comment\n"
      "dataset = /data/somewhere\n"
      "band = delta, entire\n"
      "models = mlr, mlp\n"
      "seed = 17   # trailing comment\n"
      "\n"
      "lag = 12\n",
      "inline");
  CHECK(cfg.dataset_dir == "/data/somewhere");
  CHECK(cfg.bands == std::vector<std::string>{"delta", "entire"});
  CHECK(cfg.models == std::vector<std::string>{"mlr", "mlp"});
  CHECK(cfg.seed == 17);
  CHECK(cfg.lag == 12);
  CHECK(cfg.taps == 401);
  CHECK(cfg.target_hz == 100.0);
  CHECK(cfg.max_rt_ms == 700.0);
  CHECK(cfg.car);
  CHECK(cfg.stride == 1);
}

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_config_text("mystery = 1\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("band = gamma\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("models = transformer\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("no equals sign\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("models =\n", "inline"), data_error);
  CHECK_THROWS_AS(
      parse_config_text("dataset = /x\nsynth.trials = 4\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("car = maybe\n", "inline"), data_error);
  CHECK_THROWS_AS(parse_config_text("leadfield = /x/gain.csv\n", "inline"), data_error);
}

TEST_CASE("overrides update the parsed config in place") {
  PipelineConfig cfg = parse_config_text("synth.trials = 4\n", "inline");
  apply_config_override(cfg, "models", "mlp,cnnlstm");
  apply_config_override(cfg, "seed", "99");
  apply_config_override(cfg, "band", "theta");
  CHECK(cfg.models == std::vector<std::string>{"mlp", "cnnlstm"});
  CHECK(cfg.seed == 99);
  CHECK(cfg.synth.seed == 99);
  CHECK(cfg.bands == std::vector<std::string>{"theta"});
  CHECK_THROWS_AS(apply_config_override(cfg, "nonsense", "1"), data_error);
}

TEST_CASE("fingerprints separate prep-relevant from train-relevant keys") {
  PipelineConfig a = parse_config_text("synth.trials = 4\nseed = 1\n", "inline");
  PipelineConfig b = a;
  apply_config_override(b, "models", "mlp");
  CHECK(prep_fingerprint(a) == prep_fingerprint(b));
  CHECK(train_fingerprint(a) != train_fingerprint(b));

  PipelineConfig c = a;
  apply_config_override(c, "taps", "101");
  CHECK(prep_fingerprint(a) != prep_fingerprint(c));

  PipelineConfig d = a;
  apply_config_override(d, "seed", "2");
  CHECK(prep_fingerprint(a) != prep_fingerprint(d));
}

TEST_CASE("the linear pipeline reaches unit training correlation") {
  const fs::path out = fresh_dir("linear");
  std::ostringstream cfg_text;
  cfg_text << "synth.channels = 4\n"
              "synth.trials = 21\n"
              "synth.samples = 400\n"
              "synth.lag = 3\n"
              "synth.subjects = 3\n"
              "band = none\n"
              "car = off\n"
              "models = mlr\n"
              "lag = 3\n"
              "seed = 5\n"
           << "out = " << out.string() << "\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_all(cfg);

  const std::string summary = read_file(out / "models" / "summary.txt");
  for (const char* axis : {"x", "y", "z"}) {
    const std::string key = std::string("train_pcc.mlr.none.") + axis + " = ";
    const auto pos = summary.find(key);
    REQUIRE(pos != std::string::npos);
    const auto end = summary.find('\n', pos);
    const double value = parse_double(summary.substr(pos + key.size(), end - pos - key.size()),
                                      "summary pcc");
    CHECK(value >= 0.999);
  }
  CHECK(fs::exists(out / "reports" / "pcc.csv"));
  const std::string ttest = read_file(out / "reports" / "ttest.csv");
  CHECK(ttest.find("at least two methods") != std::string::npos);
  CHECK(fs::exists(out / "reports" / "traj_mlr_none_s1_3d.svg"));
}

TEST_CASE("prep excludes slow reactions and logs them in the manifest") {
  const fs::path data = fresh_dir("gate_data");
  const fs::path out = fresh_dir("gate_out");
  Dataset ds;
  ds.montage = {"A", "B", "C"};
  ds.trials.push_back(hand_trial(1, 1, 0, 50, 1)); // 500 ms, kept
  ds.trials.push_back(hand_trial(1, 2, 0, 71, 2)); // 710 ms, excluded
  ds.trials.push_back(hand_trial(1, 3, 10, 80, 3)); // 700 ms exactly, kept
  ds.trials.push_back(hand_trial(1, 4, 0, 0, 4));
  ds.trials.push_back(hand_trial(1, 5, 0, 20, 5));
  write_dataset(ds, data.string());

  std::ostringstream cfg_text;
  cfg_text << "dataset = " << data.string() << "\n"
           << "out = " << out.string() << "\n"
           << "band = none\ncar = off\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_prep(cfg);

  const std::string manifest = read_file(out / "prepared" / "manifest.txt");
  CHECK(manifest.find("trials.input = 5") != std::string::npos);
  CHECK(manifest.find("trials.kept = 4") != std::string::npos);
  CHECK(manifest.find("trials.excluded = 1") != std::string::npos);
  CHECK(manifest.find("subject=1 trial=2 rt_ms=710") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "prepared" / "none" / "s001_t0002.csv"));
  CHECK(fs::exists(out / "prepared" / "none" / "s001_t0001.csv"));

  // The kept trial with a late cue is rebased and shortened.
  const Dataset prepared = load_dataset((out / "prepared" / "none").string());
  for (const auto& trial : prepared.trials) {
    if (trial.trial_id == 3) {
      CHECK(trial.cue_index == 0);
      CHECK(trial.onset_index == 70);
      CHECK(trial.samples() == 300 - 80);
    }
  }
}

TEST_CASE("train refuses a manifest from a different prep configuration") {
  const fs::path out = fresh_dir("mismatch");
  std::ostringstream cfg_text;
  cfg_text << "synth.channels = 3\nsynth.trials = 7\nsynth.samples = 300\nsynth.lag = 2\n"
              "band = none\ncar = off\nmodels = mlr\nlag = 2\n"
           << "out = " << out.string() << "\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_synth(cfg);
  cmd_prep(cfg);

  PipelineConfig altered = cfg;
  apply_config_override(altered, "max_rt_ms", "500");
  CHECK_THROWS_AS(cmd_train(altered), data_error);
  CHECK_NOTHROW(cmd_train(cfg));

  PipelineConfig other_models = cfg;
  apply_config_override(other_models, "lag", "4");
  CHECK_THROWS_AS(cmd_eval(other_models), data_error);
}

TEST_CASE("the paper18 channel token selects the motor subset") {
  const fs::path out = fresh_dir("paper18");
  std::ostringstream cfg_text;
  cfg_text << "synth.channels = 32\nsynth.trials = 7\nsynth.samples = 300\nsynth.lag = 1\n"
              "band = none\ncar = off\nchannels = paper18\nmodels = mlr\nlag = 1\n"
           << "out = " << out.string() << "\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_synth(cfg);
  cmd_prep(cfg);
  const Dataset prepared = load_dataset((out / "prepared" / "none").string());
  CHECK(prepared.montage == motor_subset_18());

  // motor18 is an accepted alias for the same list.
  PipelineConfig alias = cfg;
  apply_config_override(alias, "channels", "motor18");
  const fs::path out2 = fresh_dir("motor18");
  apply_config_override(alias, "out", out2.string());
  cmd_synth(alias);
  cmd_prep(alias);
  CHECK(load_dataset((out2 / "prepared" / "none").string()).montage == motor_subset_18());
}

TEST_CASE("localize ranks channels and falls back to montage order on zero data") {
  const fs::path root = fresh_dir("localize");
  const fs::path data = root / "data";
  const fs::path out = root / "out";

  // Two sensors, three dipoles; dipoles 1 and 2 sit near sensor B.
  LeadField lf;
  lf.gain = Matrix(2, 3);
  lf.gain(0, 0) = 1.0; lf.gain(0, 1) = 0.2; lf.gain(0, 2) = 0.1;
  lf.gain(1, 0) = 0.1; lf.gain(1, 1) = 1.0; lf.gain(1, 2) = 0.9;
  lf.sensor_names = {"A", "B"};
  lf.sensor_positions = {{0, 0, 0}, {10, 0, 0}};
  lf.dipole_positions = {{1, 0, 0}, {9, 0, 0}, {8, 0, 0}};
  lf.region_labels = {"left", "right", "right"};
  const std::string gain_path = (root / "gain.csv").string();
  const std::string pos_path = (root / "pos.csv").string();
  write_lead_field(lf, gain_path, pos_path);

  Dataset ds;
  ds.montage = {"A", "B"};
  TrialRecord trial;
  trial.subject_id = 1;
  trial.trial_id = 1;
  trial.sample_rate = 100.0;
  trial.load_label = "light";
  trial.friction_label = "low";
  trial.eeg = Matrix(2, 40);
  trial.kinematics = Matrix(3, 40, 0.5);
  Rng rng(4);
  for (std::size_t t = 0; t < 40; ++t) {
    const double s = 1.0 + rng.uniform();
    trial.eeg(0, t) = s * lf.gain(0, 1); // dipole 1 active, near sensor B
    trial.eeg(1, t) = s * lf.gain(1, 1);
  }
  ds.trials.push_back(trial);
  write_dataset(ds, data.string());

  std::ostringstream cfg_text;
  cfg_text << "dataset = " << data.string() << "\n"
           << "out = " << out.string() << "\n"
           << "leadfield = " << gain_path << "\n"
           << "positions = " << pos_path << "\n"
           << "rank_k = 2\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_localize(cfg);
  std::string channels = read_file(out / "localize" / "channels.csv");
  CHECK(channels.find("rank,channel") != std::string::npos);
  CHECK(channels.find("1,B") != std::string::npos);
  CHECK(channels.find("2,A") != std::string::npos);
  const std::string timeline = read_file(out / "localize" / "timeline.csv");
  CHECK(timeline.find("region,first_crossing_sample") != std::string::npos);
  CHECK(timeline.find("left,") != std::string::npos);
  CHECK(timeline.find("right,") != std::string::npos);

  // All-zero recordings rank in montage order.
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 40; ++t) ds.trials[0].eeg(c, t) = 0.0;
  }
  fs::remove_all(data);
  write_dataset(ds, data.string());
  cmd_localize(cfg);
  channels = read_file(out / "localize" / "channels.csv");
  CHECK(channels.find("1,A") != std::string::npos);
  CHECK(channels.find("2,B") != std::string::npos);
}

TEST_CASE("wpd-cnnlstm requires the entire band in the configuration") {
  const fs::path out = fresh_dir("wpd_band");
  std::ostringstream cfg_text;
  cfg_text << "synth.channels = 3\nsynth.trials = 7\nsynth.samples = 500\nsynth.lag = 1\n"
              "band = delta\nmodels = wpd-cnnlstm\n"
           << "out = " << out.string() << "\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_synth(cfg);
  cmd_prep(cfg);
  CHECK_THROWS_WITH_AS(cmd_train(cfg), doctest::Contains("entire"), data_error);
}

TEST_CASE("synth writes a ground-truth sidecar describing the generator") {
  const fs::path out = fresh_dir("gt");
  std::ostringstream cfg_text;
  cfg_text << "synth.channels = 3\nsynth.trials = 2\nsynth.samples = 100\nsynth.lag = 2\n"
           << "out = " << out.string() << "\n";
  const PipelineConfig cfg = parse_config_text(cfg_text.str(), "inline");
  cmd_synth(cfg);
  const std::string gt = read_file(out / "data" / "groundtruth.txt");
  CHECK(gt.find("channels = 3") != std::string::npos);
  CHECK(gt.find("lag_order = 2") != std::string::npos);
  CHECK(gt.find("nonlinearity = none") != std::string::npos);
  CHECK(gt.find("weights.x = ") != std::string::npos);
  // The sidecar must not disturb dataset loading.
  CHECK(load_dataset((out / "data").string()).trials.size() == 2);
}
