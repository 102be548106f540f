#include "advfl/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace advfl {

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double soft_cross_entropy(const Matrix& logits, const Matrix& targets, Matrix* grad_logits) {
  if (logits.rows() == 0) throw std::invalid_argument("cross-entropy: empty batch");
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw std::invalid_argument("cross-entropy: targets must have shape [" +
                                std::to_string(logits.rows()) + ", " +
                                std::to_string(logits.cols()) + "]");
  if (!logits.allFinite()) throw std::domain_error("cross-entropy: non-finite logits");
  for (Index i = 0; i < targets.rows(); ++i) {
    const double s = targets.row(i).sum();
    if (std::abs(s - 1.0) > 1e-9)
      throw std::invalid_argument("cross-entropy: target row " + std::to_string(i) +
                                  " sums to " + std::to_string(s) + ", expected 1");
  }
  const auto batch = static_cast<double>(logits.rows());
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double log_z = m + std::log((logits.row(i).array() - m).exp().sum());
    for (Index j = 0; j < logits.cols(); ++j)
      if (targets(i, j) != 0.0) total -= targets(i, j) * (logits(i, j) - log_z);
  }
  if (grad_logits != nullptr) *grad_logits = (softmax(logits) - targets) / batch;
  return total / batch;
}

Matrix one_hot(std::span<const int> labels, Index num_classes) {
  Matrix t = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " out of range");
    t(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return t;
}

LossGrads loss_and_grads(const Network& net, const Matrix& batch, const Matrix& targets,
                         Mode mode, Rng* rng, bool want_param_grads, Tape* tape) {
  if (batch.rows() == 0) throw std::invalid_argument("loss_and_grads: empty batch");
  Tape local;
  Tape& t = tape != nullptr ? *tape : local;
  LossGrads out;
  out.logits = net.forward(batch, mode, rng, &t);
  Matrix grad_logits;
  out.loss = soft_cross_entropy(out.logits, targets, &grad_logits);
  out.grad_input = net.backward(t, grad_logits, want_param_grads ? &out.grad_params : nullptr);
  return out;
}

}  // namespace advfl
