#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advfl/data.hpp"
#include "advfl/optim.hpp"
#include "advfl/partition.hpp"

namespace advfl {

/// Settings for adversarial training on one data set (a client's, or the
/// whole training set in the centralized case).
struct LocalTrainConfig {
  int epochs = 1;
  int batch_size = 128;
  AugmentPlan augment{};
  SgdConfig sgd{};
  /// Craft adversarial/noisy examples per mini-batch with the current model
  /// (true) or once per round with the round's starting model (false).
  bool regenerate_per_epoch = true;

  void validate() const;
};

struct ClientState {
  int id = 0;
  IndexList indices;  // local examples plus the shared sample
  std::uint64_t seed = 0;
};

struct LocalResult {
  Network model;
  double mean_loss = 0.0;  // over the final epoch's mini-batches
};

/// Called after every local epoch with (epoch, model, mean loss).
using EpochObserver = std::function<void(int, const Network&, double)>;

/// Runs `cfg.epochs` epochs of mini-batch SGD on the augmented client data
/// with soft targets, starting from `global`. Momentum starts at zero.
/// `epoch_offset` is the number of local epochs already completed (for the
/// learning-rate schedule); `round` selects the random stream.
LocalResult local_adv_train(const Network& global, const LabeledBatch& data,
                            const ClientState& client, const LocalTrainConfig& cfg,
                            int round = 0, int epoch_offset = 0,
                            const EpochObserver& observer = {});

/// sum_k |D_k| theta_k / sum_k |D_k|, accumulated in client order.
Vector fedavg(std::span<const Vector> models, std::span<const Index> sizes);

struct FedConfig {
  int clients = 5;
  int rounds = 10;
  int local_epochs = 1;
  int batch_size = 128;
  bool parallel = false;
  int eval_every = 1;
  bool regenerate_per_epoch = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RoundReport {
  int round = 0;
  std::optional<double> natural_acc;
  std::map<std::string, std::optional<double>> robust_acc;
  double mean_client_loss = 0.0;
  double wall_time_s = 0.0;
};

/// Fills the accuracy fields of a report from the current global model.
using RoundEvaluator = std::function<void(const Network&, RoundReport&)>;

struct FedResult {
  Network global;
  std::vector<RoundReport> rounds;
  std::vector<Index> client_sizes;
};

/// Full-participation federated adversarial training: every round the
/// global model is copied to every client, trained locally, and the copies
/// are averaged by data size. Serial and parallel execution agree exactly.
FedResult run_rounds(const FedConfig& cfg, const PartitionPlan& plan, const LabeledBatch& data,
                     const Network& initial, const AugmentPlan& augment, const SgdConfig& sgd,
                     const RoundEvaluator& evaluate = {});

}  // namespace advfl
