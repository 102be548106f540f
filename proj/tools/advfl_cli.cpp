#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advfl/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--set", o.overrides, "override a config value, section.key=value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial training and federated simulation toolkit"};
  app.require_subcommand(1);

  Options opts;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-central", "adversarially train one model on the whole training set"},
      {"train-fed", "federated adversarial training, optionally sweeping alpha_share"},
      {"attack-eval", "natural and robust accuracy of a model under the configured attacks"},
      {"partition-inspect", "build a client partition and report class histograms"},
      {"fit-regression", "fit accuracy = a ln(x) + b against the sharing level"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), opts);

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = advfl::load_config(opts.config, opts.overrides);
    advfl::run_experiment(advfl::parse_command(name), cfg, opts.seed, opts.out);
  } catch (const advfl::ConfigError& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << name << ": error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
