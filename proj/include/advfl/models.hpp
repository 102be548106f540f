#pragma once

#include <cstdint>
#include <vector>

#include "advfl/network.hpp"

namespace advfl {

/// A scaled-down residual network: 3x3 stem convolution, `depth` residual
/// blocks at constant width (no down-sampling), then a dense classifier.
struct MiniResNetConfig {
  Shape input{1, 8, 8};
  Index depth = 1;
  Index width = 4;
  Activation activation{};
  Index num_classes = 2;
  bool batchnorm = false;
  std::uint64_t init_seed = 0x5eed;
};

Network build_mini_resnet(const MiniResNetConfig& cfg);

/// Fully connected network: flatten, then dense/activation pairs, then a
/// dense output layer. An empty `hidden` gives a linear classifier.
Network build_mlp(Shape input, const std::vector<Index>& hidden, const Activation& activation,
                  Index num_classes, std::uint64_t init_seed = 0x5eed);

}  // namespace advfl
