#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "advfl/config.hpp"

namespace advfl {

enum class Command { train_central, train_fed, attack_eval, partition_inspect, fit_regression };

Command parse_command(const std::string& name);
std::string name_of(Command c);

struct Datasets {
  LabeledBatch train;
  LabeledBatch test;
};

/// Synthetic splits use streams derived from `seed`; CIFAR-10 is capped at
/// the configured count per class, taken in file order.
Datasets load_datasets(const DataConfig& cfg, std::uint64_t seed);

Network build_network(const NnConfig& cfg, Shape input, Index num_classes, std::uint64_t seed);

AugmentPlan make_augment_plan(const ExperimentConfig& cfg, Shape input);

// Derived seeds. Exposed so tests can rebuild the same pieces.
std::uint64_t init_seed_for(const NnConfig& cfg, std::uint64_t seed);
std::uint64_t eval_seed_for(std::uint64_t seed);

/// Runs one subcommand and writes its result files into `out_dir`:
///   report.json   numeric results, stable field set (absent values are null)
///   config.json   the effective configuration
///   timing.json   wall-clock times (kept apart so reports replay exactly)
/// plus per-command CSV files, rounds.jsonl and model files.
void run_experiment(Command command, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir);

}  // namespace advfl
