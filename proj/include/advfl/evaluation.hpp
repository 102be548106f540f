#pragma once

#include <cstdint>
#include <vector>

#include "advfl/data.hpp"

namespace advfl {

struct EvalConfig {
  std::vector<AttackKind> attacks{AttackKind::fgsm};
  AttackConfig attack{};
  double test_noise_mu = 0.0;
  double test_noise_sigma = 0.1;  // 0 disables test-time noise
  bool noise_on_clean = false;
  Index subsample = 0;  // 0 = whole test set
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Argmax class per row; ties go to the lowest class id.
std::vector<int> predict(const Network& net, const Matrix& images);

/// Fraction of correctly classified clean test images.
double eval_natural(const Network& net, const LabeledBatch& test, const EvalConfig& cfg);

struct RobustResult {
  double accuracy = 0.0;
  Index attack_failures = 0;  // examples the attack reported it could not fool
  Index evaluated = 0;
};

/// Accuracy on attacked test images with N(mu, sigma^2) noise added after
/// the attack and the result clipped to [0,1]. Work is split into fixed
/// chunks with their own random streams, so the thread count does not
/// change the result.
RobustResult eval_robust(const Network& net, const LabeledBatch& test, AttackKind attack,
                         const EvalConfig& cfg);

}  // namespace advfl
