#pragma once

#include <cstdint>
#include <vector>

#include "advfl/layers.hpp"

namespace advfl {

/// Per-forward record consumed by Network::backward.
struct Tape {
  Mode mode = Mode::test;
  std::vector<LayerCache> caches;
};

/// A sequential differentiable model whose weights are one flat vector.
///
/// Networks are plain values: copying one deep-copies its parameters, so a
/// copy can be handed to another thread and trained independently.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(input_shape) {}

  /// Appends a layer; its input is the previous layer's output.
  Network& add(Layer layer);

  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;
  Index num_classes() const { return output_shape().size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  Index param_count() const { return params_.size(); }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  /// Non-trainable state (BatchNorm running statistics).
  Vector& buffers() { return buffers_; }
  const Vector& buffers() const { return buffers_; }

  /// Re-draws all parameters from the fan-in scaled uniform initialiser.
  void init_params(std::uint64_t seed);

  /// Logits for a [B, input_shape.size()] batch. Train mode uses batch
  /// statistics in BatchNorm and samples RReLU slopes from `rng`.
  Matrix forward(const Matrix& batch, Mode mode = Mode::test, Rng* rng = nullptr,
                 Tape* tape = nullptr) const;

  /// Back-propagates `grad_logits` through the recorded pass. Returns the
  /// gradient with respect to the input batch; when `grad_params` is given
  /// it receives the parameter gradient (resized and overwritten).
  Matrix backward(const Tape& tape, const Matrix& grad_logits, Vector* grad_params) const;

  /// Gradient of sum(seed .* logits(x)) with respect to x (test mode).
  Matrix input_gradient(const Matrix& batch, const Matrix& seed) const;

  /// Folds the BatchNorm batch statistics recorded in a train-mode tape into
  /// the running statistics.
  void update_running_stats(const Tape& tape);

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> in_shapes_;
  std::vector<Index> param_offsets_;
  std::vector<Index> buffer_offsets_;
  Vector params_;
  Vector buffers_;
};

}  // namespace advfl
