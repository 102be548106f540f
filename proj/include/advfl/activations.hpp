#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advfl/types.hpp"

namespace advfl {

enum class ActivationKind {
  relu,
  rrelu,
  selu,
  celu,
  silu,
  hardsilu,
  hardtanh,
  gelu,
  softplus,
  telu,
  mish,
};

inline constexpr std::array<ActivationKind, 11> kAllActivations = {
    ActivationKind::relu,     ActivationKind::rrelu, ActivationKind::selu,
    ActivationKind::celu,     ActivationKind::silu,  ActivationKind::hardsilu,
    ActivationKind::hardtanh, ActivationKind::gelu,  ActivationKind::softplus,
    ActivationKind::telu,     ActivationKind::mish,
};

std::string_view name_of(ActivationKind kind);
/// Parses a lowercase name such as "relu" or "telu".
ActivationKind parse_activation(std::string_view name);

namespace selu_constants {
inline constexpr double alpha = 1.6732632423543772848170429916717;
inline constexpr double scale = 1.0507009873554804934193349852946;
}  // namespace selu_constants

inline constexpr double kGeluCubic = 0.044715;

/// An activation kind together with its shape constants.
struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double rrelu_lower = 1.0 / 8.0;
  double rrelu_upper = 1.0 / 3.0;
  double celu_alpha = 1.0;
  double hardtanh_min = -1.0;
  double hardtanh_max = 1.0;
  double softplus_beta = 1.0;

  Activation() = default;
  explicit Activation(ActivationKind k) : kind(k) {}

  void validate() const;
  double rrelu_test_slope() const { return (rrelu_lower + rrelu_upper) / 2.0; }
  /// Points where the function is not differentiable.
  std::vector<double> kinks() const;
  bool operator==(const Activation&) const = default;
};

namespace scalar {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// log(1 + exp(x)) without overflow.
template <typename T>
T log1pexp(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T relu(T x) { return x >= T(0) ? x : T(0); }

template <typename T>
T leaky(T x, T slope) { return x >= T(0) ? x : slope * x; }

template <typename T>
T selu(T x) {
  const T a = T(selu_constants::alpha), s = T(selu_constants::scale);
  return s * (x >= T(0) ? x : a * std::expm1(x));
}

template <typename T>
T celu(T x, T alpha) { return x >= T(0) ? x : alpha * std::expm1(x / alpha); }

template <typename T>
T silu(T x) { return x * sigmoid(x); }

template <typename T>
T hardsilu(T x) {
  if (x <= T(-3)) return T(0);
  if (x >= T(3)) return x;
  return x * (x + T(3)) / T(6);
}

template <typename T>
T hardtanh(T x, T lo, T hi) { return x < lo ? lo : (x > hi ? hi : x); }

template <typename T>
T gelu(T x) {
  const T k = std::sqrt(T(2) / T(M_PI));
  return x / T(2) * (T(1) + std::tanh(k * (x + T(kGeluCubic) * x * x * x)));
}

template <typename T>
T softplus(T x, T beta) { return log1pexp(beta * x) / beta; }

template <typename T>
T telu(T x) { return x * std::tanh(std::exp(std::min(x, T(30)))); }

template <typename T>
T mish(T x) { return x * std::tanh(log1pexp(x)); }

}  // namespace scalar

/// Elementwise activation of `x`. RReLU in train mode draws one slope per
/// element from U(lower, upper) using `rng` and writes the slopes to
/// `sampled_slopes`; in test mode it uses the midpoint slope.
Matrix act_eval(const Activation& act, const Matrix& x, Mode mode,
                Rng* rng = nullptr, Matrix* sampled_slopes = nullptr);

/// Elementwise analytic derivative. Train-mode RReLU needs the slopes
/// sampled by the matching forward call.
Matrix act_derivative(const Activation& act, const Matrix& x, Mode mode,
                      const Matrix* sampled_slopes = nullptr);

double act_eval(const Activation& act, double x);
double act_derivative(const Activation& act, double x);

}  // namespace advfl
