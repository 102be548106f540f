#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advfl/activations.hpp"
#include "advfl/types.hpp"

namespace advfl {

// Layer descriptors. They carry only hyperparameters; weights live in the
// owning Network's flat parameter vector.

struct DenseLayer {
  Index in_features = 0;
  Index out_features = 0;
  bool operator==(const DenseLayer&) const = default;
};

/// Stride-1 convolution with zero padding.
struct Conv2dLayer {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index padding = 1;
  bool operator==(const Conv2dLayer&) const = default;
};

/// Per-channel batch normalization. Running statistics are buffers, not
/// parameters.
struct BatchNormLayer {
  Index channels = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  bool operator==(const BatchNormLayer&) const = default;
};

struct ActivationLayer {
  Activation activation;
  bool operator==(const ActivationLayer&) const = default;
};

struct FlattenLayer {
  bool operator==(const FlattenLayer&) const = default;
};

/// Basic residual block without down-sampling:
///   out = x + bn2(conv2(act(bn1(conv1(x)))))
/// Both convolutions are 3x3 with padding 1, so the identity shortcut always
/// matches. The post-addition activation is a separate layer.
struct ResidualBlock {
  Index channels = 0;
  Activation activation;
  bool batchnorm = false;
  bool operator==(const ResidualBlock&) const = default;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, BatchNormLayer, ActivationLayer,
                           FlattenLayer, ResidualBlock>;

std::string layer_name(const Layer& layer);

/// Output geometry; throws if `in` is incompatible with the layer.
Shape output_shape(const Layer& layer, const Shape& in);
Index param_count(const Layer& layer);
Index buffer_count(const Layer& layer);

/// Fan-in scaled uniform initialisation of parameters and default buffers
/// (BN running mean 0, running variance 1, gamma 1, beta 0).
void init_layer(const Layer& layer, std::span<double> params, std::span<double> buffers,
                Rng& rng);

/// Values retained by a forward pass for the matching backward pass.
struct LayerCache {
  Matrix input;
  Matrix aux;     // conv: im2col matrix; bn: normalized input; act: RReLU slopes
  Vector stat_a;  // bn: batch mean
  Vector stat_b;  // bn: inverse std
  Vector batch_var;  // bn (train): unbiased batch variance for the running update
  std::vector<LayerCache> children;
};

struct LayerContext {
  Mode mode = Mode::test;
  Rng* rng = nullptr;
};

Matrix layer_forward(const Layer& layer, const Shape& in, const Matrix& x,
                     std::span<const double> params, std::span<const double> buffers,
                     const LayerContext& ctx, LayerCache* cache);

/// Returns the gradient with respect to the layer input and, when
/// `grad_params` is non-empty, accumulates parameter gradients into it.
Matrix layer_backward(const Layer& layer, const Shape& in, const Matrix& grad_out,
                      std::span<const double> params, std::span<const double> buffers,
                      Mode mode, const LayerCache& cache, std::span<double> grad_params);

/// Exponential-moving-average update of BN running statistics from the
/// statistics recorded in `cache` during a train-mode forward pass.
void update_running_stats(const Layer& layer, std::span<double> buffers,
                          const LayerCache& cache);

}  // namespace advfl
