#include "advfl/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace advfl {

namespace {

constexpr Index kChunk = 64;

Index effective_size(const LabeledBatch& test, const EvalConfig& cfg) {
  if (test.size() == 0) throw std::invalid_argument("evaluation: empty test set");
  return cfg.subsample > 0 ? std::min(cfg.subsample, test.size()) : test.size();
}

// Runs fn(chunk_index, begin, end) over fixed-size chunks on `threads`
// workers. Output placement is by chunk index.
template <typename Fn>
void for_each_chunk(Index n, int threads, Fn fn) {
  const Index chunks = (n + kChunk - 1) / kChunk;
  if (threads <= 1 || chunks <= 1) {
    for (Index c = 0; c < chunks; ++c) fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Index c = next++; c < chunks; c = next++) fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void EvalConfig::validate() const {
  if (!(test_noise_sigma >= 0.0)) throw std::invalid_argument("eval.test_noise_sigma must be >= 0");
  if (subsample < 0) throw std::invalid_argument("eval.subsample must be >= 0");
  if (threads < 1) throw std::invalid_argument("eval.threads must be >= 1");
  attack.validate();
}

std::vector<int> predict(const Network& net, const Matrix& images) {
  const Matrix logits = net.forward(images);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<int>(argmax_row(logits.row(i)));
  return out;
}

double eval_natural(const Network& net, const LabeledBatch& test, const EvalConfig& cfg) {
  cfg.validate();
  const Index n = effective_size(test, cfg);
  const Index chunks = (n + kChunk - 1) / kChunk;
  std::vector<Index> correct(static_cast<std::size_t>(chunks), 0);
  for_each_chunk(n, cfg.threads, [&](Index c, Index begin, Index end) {
    Matrix x = test.images.middleRows(begin, end - begin);
    if (cfg.noise_on_clean && cfg.test_noise_sigma > 0.0) {
      Rng rng = make_rng(cfg.seed ^ 0x6e6f697365ULL, static_cast<std::uint64_t>(c));
      x = gaussian_noise(x, cfg.test_noise_mu, cfg.test_noise_sigma, rng);
    }
    const auto pred = predict(net, x);
    for (Index i = begin; i < end; ++i)
      if (pred[static_cast<std::size_t>(i - begin)] == test.labels[static_cast<std::size_t>(i)])
        ++correct[static_cast<std::size_t>(c)];
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), Index{0})) /
         static_cast<double>(n);
}

RobustResult eval_robust(const Network& net, const LabeledBatch& test, AttackKind attack,
                         const EvalConfig& cfg) {
  cfg.validate();
  const Index n = effective_size(test, cfg);
  const Index chunks = (n + kChunk - 1) / kChunk;
  std::vector<Index> correct(static_cast<std::size_t>(chunks), 0);
  std::vector<Index> failures(static_cast<std::size_t>(chunks), 0);
  for_each_chunk(n, cfg.threads, [&](Index c, Index begin, Index end) {
    const Matrix x = test.images.middleRows(begin, end - begin);
    const std::span<const int> labels(test.labels.data() + begin, static_cast<std::size_t>(end - begin));
    Rng attack_rng = make_rng(cfg.seed, static_cast<std::uint64_t>(c));
    AttackOutput adv = run_attack(attack, net, x, labels, cfg.attack, attack_rng);
    Matrix noisy = std::move(adv.adversarial);
    if (cfg.test_noise_sigma > 0.0) {
      Rng noise_rng = make_rng(cfg.seed ^ 0x6e6f697365ULL, static_cast<std::uint64_t>(c));
      noisy = gaussian_noise(noisy, cfg.test_noise_mu, cfg.test_noise_sigma, noise_rng);
    }
    const auto pred = predict(net, noisy);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == labels[i]) ++correct[static_cast<std::size_t>(c)];
      if (adv.failed[i]) ++failures[static_cast<std::size_t>(c)];
    }
  });
  RobustResult out;
  out.evaluated = n;
  out.accuracy = static_cast<double>(std::accumulate(correct.begin(), correct.end(), Index{0})) /
                 static_cast<double>(n);
  out.attack_failures = std::accumulate(failures.begin(), failures.end(), Index{0});
  return out;
}

}  // namespace advfl
