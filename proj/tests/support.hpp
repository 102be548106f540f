#pragma once

// Shared oracles for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "advfl/loss.hpp"
#include "advfl/network.hpp"

namespace advfl::testing {

inline Matrix random_matrix(Index rows, Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Random rows on the probability simplex.
inline Matrix random_targets(Index rows, Index classes, Rng& rng) {
  Matrix t = random_matrix(rows, classes, 0.05, 1.0, rng);
  for (Index i = 0; i < rows; ++i) t.row(i) /= t.row(i).sum();
  return t;
}

// Relative error with a small absolute floor so coordinates whose true
// gradient is ~0 are not judged on rounding noise alone.
inline constexpr double kRelFloor = 1e-6;

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

/// Distance from any hidden pre-activation to the nearest kink.
inline double kink_distance(const Network& net, const Matrix& x, Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  Tape tape;
  net.forward(x, mode, &rng, &tape);
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](const Activation& act, const Matrix& pre) {
    for (double k : act.kinks())
      best = std::min(best, (pre.array() - k).abs().minCoeff());
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& l = net.layers()[i];
    if (const auto* a = std::get_if<ActivationLayer>(&l)) scan(a->activation, tape.caches[i].input);
    if (const auto* r = std::get_if<ResidualBlock>(&l))
      scan(r->activation, tape.caches[i].children[2].input);
  }
  return best;
}

struct GradCheck {
  double max_param_err = 0.0;
  double max_input_err = 0.0;
};

/// Central differences of the soft-target loss against the analytic
/// gradients, over every parameter and every input coordinate. Train mode
/// replays the same random stream for every evaluation.
inline GradCheck check_gradients(const Network& net, const Matrix& x, const Matrix& targets,
                                 Mode mode, std::uint64_t seed, double h = 1e-5) {
  auto loss_at = [&](const Network& n, const Matrix& in) {
    Rng rng(seed);
    return soft_cross_entropy(n.forward(in, mode, &rng), targets, nullptr);
  };
  Rng rng(seed);
  const LossGrads lg = loss_and_grads(net, x, targets, mode, &rng, true);

  GradCheck out;
  Network probe = net;
  for (Index i = 0; i < net.param_count(); ++i) {
    const double orig = probe.params()(i);
    probe.params()(i) = orig + h;
    const double up = loss_at(probe, x);
    probe.params()(i) = orig - h;
    const double down = loss_at(probe, x);
    probe.params()(i) = orig;
    out.max_param_err = std::max(out.max_param_err, rel_err(lg.grad_params(i), (up - down) / (2 * h)));
  }
  Matrix xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + h;
    const double up = loss_at(net, xp);
    xp.data()[i] = orig - h;
    const double down = loss_at(net, xp);
    xp.data()[i] = orig;
    out.max_input_err = std::max(out.max_input_err, rel_err(lg.grad_input.data()[i], (up - down) / (2 * h)));
  }
  return out;
}

/// Naive dense layer: y[b][o] = sum_i x[b][i] * W[o][i] + bias[o].
inline Matrix naive_dense(const Matrix& x, const double* w, const double* bias, Index in, Index out) {
  Matrix y(x.rows(), out);
  for (Index b = 0; b < x.rows(); ++b)
    for (Index o = 0; o < out; ++o) {
      double s = bias[o];
      for (Index i = 0; i < in; ++i) s += x(b, i) * w[o * in + i];
      y(b, o) = s;
    }
  return y;
}

/// Naive zero-padded stride-1 cross-correlation, weights [co][ci][ki][kj].
inline Matrix naive_conv(const Matrix& x, Shape in, const double* w, const double* bias,
                         Index out_channels, Index k, Index pad) {
  const Index oh_n = in.height + 2 * pad - k + 1, ow_n = in.width + 2 * pad - k + 1;
  Matrix y(x.rows(), out_channels * oh_n * ow_n);
  for (Index b = 0; b < x.rows(); ++b)
    for (Index co = 0; co < out_channels; ++co)
      for (Index oh = 0; oh < oh_n; ++oh)
        for (Index ow = 0; ow < ow_n; ++ow) {
          double s = bias[co];
          for (Index ci = 0; ci < in.channels; ++ci)
            for (Index ki = 0; ki < k; ++ki)
              for (Index kj = 0; kj < k; ++kj) {
                const Index ih = oh + ki - pad, iw = ow + kj - pad;
                if (ih < 0 || iw < 0 || ih >= in.height || iw >= in.width) continue;
                s += w[((co * in.channels + ci) * k + ki) * k + kj] *
                     x(b, (ci * in.height + ih) * in.width + iw);
              }
          y(b, (co * oh_n + oh) * ow_n + ow) = s;
        }
  return y;
}

/// Linear binary classifier as a network: logits (w.x + b, 0), so the
/// decision function is f(x) = w.x + b.
inline Network linear_binary(const Vector& w, double b) {
  const Index d = w.size();
  Network net(Shape{1, 1, d});
  net.add(FlattenLayer{});
  net.add(DenseLayer{d, 2});
  Vector& p = net.params();
  p.setZero();
  p.head(d) = w;
  p(2 * d) = b;
  return net;
}

}  // namespace advfl::testing
