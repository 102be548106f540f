#include "advfl/network.hpp"

#include <stdexcept>

namespace advfl {

Network& Network::add(Layer layer) {
  const Shape in = layers_.empty() ? input_shape_ : output_shape();
  try {
    (void)advfl::output_shape(layer, in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("layer " + std::to_string(layers_.size()) + " (" +
                                layer_name(layer) + "): " + e.what());
  }
  const Index np = advfl::param_count(layer);
  const Index nb = advfl::buffer_count(layer);
  param_offsets_.push_back(params_.size());
  buffer_offsets_.push_back(buffers_.size());
  in_shapes_.push_back(in);
  params_.conservativeResize(params_.size() + np);
  params_.tail(np).setZero();
  buffers_.conservativeResize(buffers_.size() + nb);
  buffers_.tail(nb).setZero();
  layers_.push_back(std::move(layer));
  return *this;
}

Shape Network::output_shape() const {
  if (layers_.empty()) return input_shape_;
  return advfl::output_shape(layers_.back(), in_shapes_.back());
}

void Network::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<double> p(params_.data() + param_offsets_[i], advfl::param_count(layers_[i]));
    std::span<double> b(buffers_.data() + buffer_offsets_[i], advfl::buffer_count(layers_[i]));
    init_layer(layers_[i], p, b, rng);
  }
}

Matrix Network::forward(const Matrix& batch, Mode mode, Rng* rng, Tape* tape) const {
  if (batch.cols() != input_shape_.size()) {
    const std::string where =
        layers_.empty() ? std::string("network input") : "layer 0 (" + layer_name(layers_[0]) + ")";
    throw std::invalid_argument(where + ": expected " + std::to_string(input_shape_.size()) +
                                " features per example " + to_string(input_shape_) + ", got " +
                                std::to_string(batch.cols()));
  }
  if (tape != nullptr) {
    tape->mode = mode;
    tape->caches.assign(layers_.size(), LayerCache{});
  }
  const LayerContext ctx{mode, rng};
  Matrix x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<const double> p(params_.data() + param_offsets_[i], advfl::param_count(layers_[i]));
    std::span<const double> b(buffers_.data() + buffer_offsets_[i], advfl::buffer_count(layers_[i]));
    try {
      x = layer_forward(layers_[i], in_shapes_[i], x, p, b, ctx,
                        tape == nullptr ? nullptr : &tape->caches[i]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("layer " + std::to_string(i) + " (" + layer_name(layers_[i]) +
                                  "): " + e.what());
    }
  }
  return x;
}

Matrix Network::backward(const Tape& tape, const Matrix& grad_logits, Vector* grad_params) const {
  if (tape.caches.size() != layers_.size())
    throw std::invalid_argument("backward: tape does not match this network");
  if (grad_params != nullptr) grad_params->setZero(params_.size());
  Matrix g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<const double> p(params_.data() + param_offsets_[i], advfl::param_count(layers_[i]));
    std::span<const double> b(buffers_.data() + buffer_offsets_[i], advfl::buffer_count(layers_[i]));
    std::span<double> gp;
    if (grad_params != nullptr)
      gp = std::span<double>(grad_params->data() + param_offsets_[i], advfl::param_count(layers_[i]));
    g = layer_backward(layers_[i], in_shapes_[i], g, p, b, tape.mode, tape.caches[i], gp);
  }
  return g;
}

Matrix Network::input_gradient(const Matrix& batch, const Matrix& seed) const {
  Tape tape;
  const Matrix logits = forward(batch, Mode::test, nullptr, &tape);
  if (seed.rows() != logits.rows() || seed.cols() != logits.cols())
    throw std::invalid_argument("input_gradient: seed shape does not match logits");
  return backward(tape, seed, nullptr);
}

void Network::update_running_stats(const Tape& tape) {
  if (tape.mode != Mode::train || tape.caches.size() != layers_.size()) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<double> b(buffers_.data() + buffer_offsets_[i], advfl::buffer_count(layers_[i]));
    if (!b.empty()) advfl::update_running_stats(layers_[i], b, tape.caches[i]);
  }
}

}  // namespace advfl
