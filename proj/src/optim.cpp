#include "advfl/optim.hpp"

#include <stdexcept>

namespace advfl {

Schedule parse_schedule(const std::string& name) {
  if (name == "fixed") return Schedule::fixed;
  if (name == "piecewise" || name == "varied") return Schedule::piecewise;
  throw std::invalid_argument("unknown schedule '" + name + "' (expected fixed or piecewise)");
}

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
}

double lr_at_epoch(int epoch) {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  if (epoch < 100) return 0.001;
  if (epoch < 150) return 0.0001;
  return 0.00001;
}

double SgdConfig::lr_for_epoch(int epoch) const {
  if (schedule == Schedule::fixed) return lr;
  if (epoch < 100) return lr;
  if (epoch < 150) return lr / 10.0;
  return lr / 100.0;
}

void sgd_step(Vector& params, const Vector& grads, Vector& velocity, const SgdConfig& cfg,
              double lr) {
  if (grads.size() != params.size())
    throw std::invalid_argument("sgd_step: gradient size " + std::to_string(grads.size()) +
                                " does not match parameter size " + std::to_string(params.size()));
  if (velocity.size() == 0) velocity.setZero(params.size());
  if (velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: velocity size does not match parameter size");
  velocity = cfg.momentum * velocity + grads + cfg.weight_decay * params;
  params -= lr * velocity;
}

}  // namespace advfl
