#include "advfl/fed.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "advfl/loss.hpp"

namespace advfl {

namespace {

// One SGD step on an already augmented batch.
double train_step(Network& net, const LabeledBatch& batch, const SgdConfig& sgd, double lr,
                  Vector& velocity, Rng& rng) {
  Tape tape;
  LossGrads lg = loss_and_grads(net, batch.images, *batch.soft_targets, Mode::train, &rng, true, &tape);
  net.update_running_stats(tape);
  sgd_step(net.params(), lg.grad_params, velocity, sgd, lr);
  return lg.loss;
}

std::vector<IndexList> make_batches(IndexList order, int batch_size) {
  std::vector<IndexList> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace

void LocalTrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("local epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  augment.validate();
  sgd.validate();
}

void FedConfig::validate() const {
  if (clients < 1) throw std::invalid_argument("fed.K must be >= 1");
  if (rounds < 1) throw std::invalid_argument("fed.R must be >= 1");
  if (local_epochs < 1) throw std::invalid_argument("fed.E must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("fed.batch_size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("fed.eval_every must be >= 1");
}

LocalResult local_adv_train(const Network& global, const LabeledBatch& data,
                            const ClientState& client, const LocalTrainConfig& cfg, int round,
                            int epoch_offset, const EpochObserver& observer) {
  if (cfg.epochs < 1) throw std::invalid_argument("local epochs must be >= 1");
  if (client.indices.empty())
    throw std::invalid_argument("client " + std::to_string(client.id) + " has no training data");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  cfg.augment.validate();
  // lr = 0 is allowed here (a frozen run); the config-level check rejects it.
  if (cfg.sgd.lr < 0.0) throw std::invalid_argument("lr must be >= 0");

  Rng rng = make_rng(client.seed, static_cast<std::uint64_t>(round));
  LocalResult out{global, 0.0};
  Network& net = out.model;
  Vector velocity = Vector::Zero(net.param_count());

  // Pre-built augmented set when examples are crafted once per round.
  std::optional<LabeledBatch> fixed;
  if (!cfg.regenerate_per_epoch) {
    LabeledBatch all;
    for (const auto& b : make_batches(client.indices, cfg.batch_size)) {
      LabeledBatch aug = augment_batch(data.subset(b), cfg.augment, &net, rng);
      all = concat(all, aug);
    }
    fixed = std::move(all);
  }

  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = cfg.sgd.lr_for_epoch(epoch_offset + e);
    double loss_sum = 0.0;
    int steps = 0;
    if (fixed) {
      IndexList order(static_cast<std::size_t>(fixed->size()));
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      const int views = static_cast<int>(fixed->size() / static_cast<Index>(client.indices.size()));
      for (const auto& b : make_batches(order, cfg.batch_size * std::max(views, 1))) {
        loss_sum += train_step(net, fixed->subset(b), cfg.sgd, lr, velocity, rng);
        ++steps;
      }
    } else {
      IndexList order = client.indices;
      std::shuffle(order.begin(), order.end(), rng);
      for (const auto& b : make_batches(order, cfg.batch_size)) {
        const LabeledBatch aug = augment_batch(data.subset(b), cfg.augment, &net, rng);
        loss_sum += train_step(net, aug, cfg.sgd, lr, velocity, rng);
        ++steps;
      }
    }
    out.mean_loss = loss_sum / steps;
    if (observer) observer(e, net, out.mean_loss);
  }
  return out;
}

Vector fedavg(std::span<const Vector> models, std::span<const Index> sizes) {
  if (models.empty()) throw std::invalid_argument("fedavg: no models");
  if (models.size() != sizes.size())
    throw std::invalid_argument("fedavg: " + std::to_string(models.size()) + " models but " +
                                std::to_string(sizes.size()) + " sizes");
  double total = 0.0;
  for (Index s : sizes) {
    if (s <= 0) throw std::invalid_argument("fedavg: client sizes must be > 0");
    total += static_cast<double>(s);
  }
  const Index dim = models.front().size();
  Vector out = Vector::Zero(dim);
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (models[k].size() != dim)
      throw std::invalid_argument("fedavg: model " + std::to_string(k) + " has " +
                                  std::to_string(models[k].size()) + " parameters, expected " +
                                  std::to_string(dim));
    out += (static_cast<double>(sizes[k]) / total) * models[k];
  }
  return out;
}

FedResult run_rounds(const FedConfig& cfg, const PartitionPlan& plan, const LabeledBatch& data,
                     const Network& initial, const AugmentPlan& augment, const SgdConfig& sgd,
                     const RoundEvaluator& evaluate) {
  cfg.validate();
  if (static_cast<int>(plan.client_indices.size()) != cfg.clients)
    throw std::invalid_argument("run_rounds: plan has " +
                                std::to_string(plan.client_indices.size()) + " clients, config K=" +
                                std::to_string(cfg.clients));

  std::vector<ClientState> clients;
  for (int k = 0; k < cfg.clients; ++k)
    clients.push_back({k, plan.client_set(static_cast<std::size_t>(k)),
                       mix_seed(cfg.seed, static_cast<std::uint64_t>(k))});

  LocalTrainConfig local;
  local.epochs = cfg.local_epochs;
  local.batch_size = cfg.batch_size;
  local.augment = augment;
  local.sgd = sgd;
  local.regenerate_per_epoch = cfg.regenerate_per_epoch;

  FedResult result;
  result.global = initial;
  for (const auto& c : clients) result.client_sizes.push_back(static_cast<Index>(c.indices.size()));

  for (int t = 0; t < cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<LocalResult> updates(clients.size());
    std::vector<std::exception_ptr> errors(clients.size());
    auto work = [&](std::size_t k) {
      try {
        updates[k] = local_adv_train(result.global, data, clients[k], local, t,
                                     t * cfg.local_epochs);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    };
    if (cfg.parallel) {
      std::vector<std::thread> pool;
      for (std::size_t k = 0; k < clients.size(); ++k) pool.emplace_back(work, k);
      for (auto& th : pool) th.join();
    } else {
      for (std::size_t k = 0; k < clients.size(); ++k) work(k);
    }
    for (std::size_t k = 0; k < errors.size(); ++k) {
      if (!errors[k]) continue;
      try {
        std::rethrow_exception(errors[k]);
      } catch (const std::exception& e) {
        throw std::runtime_error("client " + std::to_string(k) + ": " + e.what());
      }
    }

    std::vector<Vector> params, buffers;
    double loss = 0.0;
    for (const auto& u : updates) {
      params.push_back(u.model.params());
      buffers.push_back(u.model.buffers());
      loss += u.mean_loss;
    }
    result.global.params() = fedavg(params, result.client_sizes);
    if (result.global.buffers().size() > 0)
      result.global.buffers() = fedavg(buffers, result.client_sizes);

    RoundReport report;
    report.round = t + 1;
    report.mean_client_loss = loss / static_cast<double>(updates.size());
    if (evaluate && ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.rounds))
      evaluate(result.global, report);
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.rounds.push_back(std::move(report));
  }
  return result;
}

}  // namespace advfl
