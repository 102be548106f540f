#pragma once

#include "advfl/types.hpp"

namespace advfl {

enum class Schedule { fixed, piecewise };

Schedule parse_schedule(const std::string& name);

struct SgdConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0002;
  Schedule schedule = Schedule::fixed;

  void validate() const;
  /// Learning rate for local epoch `epoch`. The piecewise schedule divides
  /// `lr` by ten at epoch 100 and again at epoch 150.
  double lr_for_epoch(int epoch) const;
};

/// The step schedule 0.001 / 0.0001 / 0.00001 with boundaries at epochs 100
/// and 150 (lower boundary inclusive).
double lr_at_epoch(int epoch);

/// v <- momentum * v + grad + weight_decay * theta; theta <- theta - lr * v.
void sgd_step(Vector& params, const Vector& grads, Vector& velocity, const SgdConfig& cfg,
              double lr);

}  // namespace advfl
