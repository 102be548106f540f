#pragma once

#include <span>
#include <vector>

#include "advfl/network.hpp"

namespace advfl {

/// Row-wise softmax, computed with the max-shift for stability.
Matrix softmax(const Matrix& logits);

/// Mean over the batch of -sum_i t_i log softmax(z)_i, plus the gradient
/// with respect to the logits.
double soft_cross_entropy(const Matrix& logits, const Matrix& targets, Matrix* grad_logits);

/// One-hot target rows.
Matrix one_hot(std::span<const int> labels, Index num_classes);

struct LossGrads {
  double loss = 0.0;
  Vector grad_params;  // empty when parameter gradients were not requested
  Matrix grad_input;
  Matrix logits;
};

/// Soft-target cross-entropy and its gradients with respect to the
/// parameters and the input batch. Target rows must each sum to 1.
LossGrads loss_and_grads(const Network& net, const Matrix& batch, const Matrix& targets,
                         Mode mode = Mode::test, Rng* rng = nullptr, bool want_param_grads = true,
                         Tape* tape = nullptr);

}  // namespace advfl
