#include "advfl/models.hpp"

#include <stdexcept>

namespace advfl {

Network build_mini_resnet(const MiniResNetConfig& cfg) {
  if (cfg.depth < 1) throw std::invalid_argument("mini_resnet: depth must be >= 1");
  if (cfg.width < 1) throw std::invalid_argument("mini_resnet: width must be >= 1");
  if (cfg.num_classes < 2) throw std::invalid_argument("mini_resnet: need at least 2 classes");
  if (cfg.input.height < 3 || cfg.input.width < 3)
    throw std::invalid_argument("mini_resnet: input must be at least 3x3 for the stem kernel");
  cfg.activation.validate();

  Network net(cfg.input);
  net.add(Conv2dLayer{cfg.input.channels, cfg.width, 3, 1});
  if (cfg.batchnorm) net.add(BatchNormLayer{cfg.width});
  net.add(ActivationLayer{cfg.activation});
  for (Index i = 0; i < cfg.depth; ++i) {
    net.add(ResidualBlock{cfg.width, cfg.activation, cfg.batchnorm});
    net.add(ActivationLayer{cfg.activation});
  }
  net.add(FlattenLayer{});
  net.add(DenseLayer{cfg.width * cfg.input.height * cfg.input.width, cfg.num_classes});
  net.init_params(cfg.init_seed);
  return net;
}

Network build_mlp(Shape input, const std::vector<Index>& hidden, const Activation& activation,
                  Index num_classes, std::uint64_t init_seed) {
  if (num_classes < 2) throw std::invalid_argument("mlp: need at least 2 classes");
  Network net(input);
  net.add(FlattenLayer{});
  Index width = input.size();
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("mlp: hidden width must be >= 1");
    net.add(DenseLayer{width, h});
    net.add(ActivationLayer{activation});
    width = h;
  }
  net.add(DenseLayer{width, num_classes});
  net.init_params(init_seed);
  return net;
}

}  // namespace advfl
