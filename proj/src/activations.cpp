#include "advfl/activations.hpp"

#include <stdexcept>

namespace advfl {

namespace {

constexpr std::array<std::string_view, 11> kNames = {
    "relu", "rrelu", "selu", "celu", "silu", "hardsilu",
    "hardtanh", "gelu", "softplus", "telu", "mish",
};

double derivative_at(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::relu:
      return x >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::rrelu:
      return x >= 0.0 ? 1.0 : a.rrelu_test_slope();
    case ActivationKind::selu:
      return selu_constants::scale * (x >= 0.0 ? 1.0 : selu_constants::alpha * std::exp(x));
    case ActivationKind::celu:
      return x >= 0.0 ? 1.0 : std::exp(x / a.celu_alpha);
    case ActivationKind::silu: {
      const double s = scalar::sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case ActivationKind::hardsilu:
      if (x <= -3.0) return 0.0;
      if (x >= 3.0) return 1.0;
      return (2.0 * x + 3.0) / 6.0;
    case ActivationKind::hardtanh:
      return (x > a.hardtanh_min && x < a.hardtanh_max) ? 1.0 : 0.0;
    case ActivationKind::gelu: {
      const double k = std::sqrt(2.0 / M_PI);
      const double t = std::tanh(k * (x + kGeluCubic * x * x * x));
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * kGeluCubic * x * x);
    }
    case ActivationKind::softplus:
      return scalar::sigmoid(a.softplus_beta * x);
    case ActivationKind::telu: {
      const double e = std::exp(std::min(x, 30.0));
      const double t = std::tanh(e);
      return t + x * e * (1.0 - t * t);
    }
    case ActivationKind::mish: {
      const double t = std::tanh(scalar::log1pexp(x));
      return t + x * (1.0 - t * t) * scalar::sigmoid(x);
    }
  }
  throw std::invalid_argument("unknown activation kind");
}

}  // namespace

std::string_view name_of(ActivationKind kind) {
  return kNames.at(static_cast<std::size_t>(kind));
}

ActivationKind parse_activation(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return kAllActivations[i];
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void Activation::validate() const {
  if (!(rrelu_lower < rrelu_upper))
    throw std::invalid_argument("rrelu: lower bound must be below upper bound");
  if (!(softplus_beta > 0.0)) throw std::invalid_argument("softplus: beta must be positive");
  if (!(hardtanh_min < hardtanh_max))
    throw std::invalid_argument("hardtanh: min must be below max");
  if (!(celu_alpha > 0.0)) throw std::invalid_argument("celu: alpha must be positive");
}

std::vector<double> Activation::kinks() const {
  switch (kind) {
    case ActivationKind::relu:
    case ActivationKind::rrelu:
    case ActivationKind::selu:  // derivative jumps from scale*alpha to scale
      return {0.0};
    case ActivationKind::hardsilu:
      return {-3.0, 3.0};
    case ActivationKind::hardtanh:
      return {hardtanh_min, hardtanh_max};
    default:
      return {};
  }
}

double act_eval(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::relu: return scalar::relu(x);
    case ActivationKind::rrelu: return scalar::leaky(x, a.rrelu_test_slope());
    case ActivationKind::selu: return scalar::selu(x);
    case ActivationKind::celu: return scalar::celu(x, a.celu_alpha);
    case ActivationKind::silu: return scalar::silu(x);
    case ActivationKind::hardsilu: return scalar::hardsilu(x);
    case ActivationKind::hardtanh: return scalar::hardtanh(x, a.hardtanh_min, a.hardtanh_max);
    case ActivationKind::gelu: return scalar::gelu(x);
    case ActivationKind::softplus: return scalar::softplus(x, a.softplus_beta);
    case ActivationKind::telu: return scalar::telu(x);
    case ActivationKind::mish: return scalar::mish(x);
  }
  throw std::invalid_argument("unknown activation kind");
}

double act_derivative(const Activation& a, double x) { return derivative_at(a, x); }

Matrix act_eval(const Activation& a, const Matrix& x, Mode mode, Rng* rng,
                Matrix* sampled_slopes) {
  a.validate();
  if (a.kind == ActivationKind::rrelu && mode == Mode::train) {
    if (rng == nullptr) throw std::invalid_argument("rrelu: train mode requires an rng");
    std::uniform_real_distribution<double> slope(a.rrelu_lower, a.rrelu_upper);
    Matrix slopes(x.rows(), x.cols());
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      double s = slope(*rng);
      while (s == a.rrelu_lower) s = slope(*rng);  // keep the slope strictly inside (l, u)
      slopes.data()[i] = s;
      out.data()[i] = scalar::leaky(x.data()[i], s);
    }
    if (sampled_slopes != nullptr) *sampled_slopes = std::move(slopes);
    return out;
  }
  return x.unaryExpr([&a](double v) { return act_eval(a, v); });
}

Matrix act_derivative(const Activation& a, const Matrix& x, Mode mode,
                      const Matrix* sampled_slopes) {
  a.validate();
  if (a.kind == ActivationKind::rrelu && mode == Mode::train) {
    if (sampled_slopes == nullptr || sampled_slopes->rows() != x.rows() ||
        sampled_slopes->cols() != x.cols())
      throw std::invalid_argument(
          "rrelu: train-mode derivative requires the slopes sampled in the forward pass");
    return x.binaryExpr(*sampled_slopes, [](double v, double s) { return v >= 0.0 ? 1.0 : s; });
  }
  return x.unaryExpr([&a](double v) { return derivative_at(a, v); });
}

}  // namespace advfl
