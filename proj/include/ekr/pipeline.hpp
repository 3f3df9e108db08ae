#pragma once

#include "ekr/dataio.hpp"
#include "ekr/neural.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ekr {

// Flat key=value configuration driving the subcommands. Exactly one of
// `dataset` (a trial directory) or the synth.* family selects the input.
struct PipelineConfig {
  std::map<std::string, std::string> raw;

  std::string dataset_dir;
  bool use_synth = false;
  SynthSpec synth;

  std::string out_dir = "out";
  std::uint64_t seed = 0;

  std::vector<std::string> bands = {"entire"};
  std::size_t taps = 401;
  double target_hz = 100.0;
  double max_rt_ms = 700.0;
  std::string channels = "all";
  bool car = true;
  SplitRatios split;

  std::vector<std::string> models = {"mlr"};
  std::size_t lag = 10;
  double ridge = 1e-8;
  std::size_t frame_len = 64;
  std::size_t seq_len = 10;
  std::size_t wpd_depth = 5;
  std::size_t wpd_frame_len = 32;
  std::size_t wpd_seq_len = 4;
  std::size_t stride = 1;
  TrainConfig train;

  std::string leadfield_path;
  std::string positions_path;
  std::size_t rank_k = 18;
  double latency_threshold = 0.5;
  double alpha = -1.0;
};

PipelineConfig parse_config_text(const std::string& text, const std::string& context);
PipelineConfig parse_config_file(const std::string& path);

// Applies one key=value override on top of a parsed config (the CLI flags
// funnel through this).
void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value);

// Content fingerprints chaining prep -> train -> eval so stale artifact
// mixes fail loudly instead of silently.
std::uint64_t prep_fingerprint(const PipelineConfig& cfg);
std::uint64_t train_fingerprint(const PipelineConfig& cfg);

void cmd_synth(const PipelineConfig& cfg);
void cmd_prep(const PipelineConfig& cfg);
void cmd_localize(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_eval(const PipelineConfig& cfg);
void cmd_all(const PipelineConfig& cfg);

} // namespace ekr
