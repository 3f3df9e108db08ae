#include "ekr/errors.hpp"
#include "ekr/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::string models;
  std::string bands;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "pipeline config file (key = value lines)")
      ->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", flags.seed, "random seed (overrides the config)");
  cmd->add_option("--models", flags.models, "comma list of models (overrides the config)");
  cmd->add_option("--bands", flags.bands, "comma list of bands (overrides the config)");
}

ekr::PipelineConfig load_config(const CommonFlags& flags) {
  ekr::PipelineConfig cfg = ekr::parse_config_file(flags.config_path);
  if (!flags.out_dir.empty()) ekr::apply_config_override(cfg, "out", flags.out_dir);
  if (!flags.seed.empty()) ekr::apply_config_override(cfg, "seed", flags.seed);
  if (!flags.models.empty()) ekr::apply_config_override(cfg, "models", flags.models);
  if (!flags.bands.empty()) ekr::apply_config_override(cfg, "band", flags.bands);
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-to-kinematics reconstruction pipeline"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const ekr::PipelineConfig&);
  };
  static const Sub subs[] = {
      {"synth", "generate a synthetic dataset", ekr::cmd_synth},
      {"prep", "resample, filter, gate, split and standardize a dataset", ekr::cmd_prep},
      {"localize", "rank channels by standardized source power", ekr::cmd_localize},
      {"train", "fit the configured models per band", ekr::cmd_train},
      {"eval", "score test partitions, t-tests, trajectory plots", ekr::cmd_eval},
      {"all", "run every stage in order", ekr::cmd_all},
  };

  std::vector<CommonFlags> flag_sets(std::size(subs));
  std::function<void()> selected;
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmd, flag_sets[i]);
    const Sub& sub = subs[i];
    CommonFlags& flags = flag_sets[i];
    cmd->callback([&selected, &sub, &flags] {
      selected = [&sub, &flags] { sub.run(load_config(flags)); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    selected();
  } catch (const ekr::usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ekr::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ekr::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
