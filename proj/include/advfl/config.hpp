#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "advfl/evaluation.hpp"
#include "advfl/fed.hpp"
#include "advfl/models.hpp"

namespace advfl {

// Experiment configuration. On disk it is a JSON object with one object per
// section (data, nn, attack, partition, fed, eval, regression); every key is
// optional and unknown keys are rejected.

enum class DataSource { synthetic, cifar10 };
enum class ModelKind { mini_resnet, mlp };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::string cifar_dir;
  SyntheticSpec synthetic{};
  int train_per_class = 200;
  int test_per_class = 100;
  Index crop_padding = 4;
  double hflip_prob = 0.5;
  bool include_pgd = true;
  bool include_gaussian = true;
};

struct NnConfig {
  ModelKind model = ModelKind::mini_resnet;
  Index depth = 1;
  Index width = 4;
  std::vector<Index> hidden{32};
  bool batchnorm = false;
  Activation activation{};
  SgdConfig sgd{};
  int epochs = 10;
  int batch_size = 128;
  double alpha_sl = 0.05;
  bool regenerate_per_epoch = true;
  std::optional<std::uint64_t> init_seed;  // default: derived from --seed
};

struct PartitionSection {
  Strategy strategy = Strategy::two_class;
  Index shared_per_class = 0;
  double alpha_share = 0.0;
  double beta_dirichlet = 0.1;
  std::vector<double> sweep;  // alpha_share values; empty = single run
};

struct RegressionSection {
  std::string input;             // sweep CSV; empty = built-in reference table
  std::string column = "robust";  // robust | natural
};

struct ExperimentConfig {
  DataConfig data{};
  NnConfig nn{};
  AttackConfig attack{};
  PartitionSection partition{};
  FedConfig fed{};
  EvalConfig eval{};
  std::string eval_model;  // attack-eval: model file to load
  RegressionSection regression{};
};

/// All field-level problems found in one config document.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads a JSON config file and applies "section.key=value" overrides. The
/// value is parsed as JSON when possible, otherwise taken as a string.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

/// The effective configuration, every key present, in canonical names.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

}  // namespace advfl
