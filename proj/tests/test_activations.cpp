#include "doctest.h"

#include <cmath>

#include "advfl/activations.hpp"
#include "support.hpp"

using namespace advfl;
using namespace advfl::testing;

namespace {

double eval1(ActivationKind k, double x) { return act_eval(Activation(k), x); }

bool near_kink(const Activation& a, double x, double margin) {
  for (double k : a.kinks())
    if (std::abs(x - k) < margin) return true;
  return false;
}

}  // namespace

TEST_SUITE("activations") {

TEST_CASE("constants") {
  const Activation a;
  CHECK(a.rrelu_lower == 1.0 / 8.0);
  CHECK(a.rrelu_upper == 1.0 / 3.0);
  CHECK(selu_constants::alpha == doctest::Approx(1.6733).epsilon(1e-4));
  CHECK(selu_constants::scale == doctest::Approx(1.0507).epsilon(1e-4));
  CHECK(kGeluCubic == 0.044715);
  CHECK(a.celu_alpha == 1.0);
  CHECK(a.hardtanh_min == -1.0);
  CHECK(a.hardtanh_max == 1.0);
  CHECK(a.softplus_beta == 1.0);
}

TEST_CASE("definition examples") {
  CHECK(eval1(ActivationKind::relu, -2) == 0.0);
  CHECK(eval1(ActivationKind::relu, 3) == 3.0);
  for (auto k : {ActivationKind::gelu, ActivationKind::telu, ActivationKind::mish,
                 ActivationKind::selu, ActivationKind::silu})
    CHECK(eval1(k, 0.0) == 0.0);
  CHECK(eval1(ActivationKind::softplus, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eval1(ActivationKind::rrelu, -1.0) == doctest::Approx(-11.0 / 48.0).epsilon(1e-15));
  const long double one = 1.0L;
  const long double mish = one * std::tanh(std::log1p(std::exp(one)));
  CHECK(std::abs(eval1(ActivationKind::mish, 1.0) - static_cast<double>(mish)) < 1e-12);
  const long double telu = 2.0L * std::tanh(std::exp(2.0L));
  CHECK(std::abs(eval1(ActivationKind::telu, 2.0) - static_cast<double>(telu)) < 1e-12);
}

TEST_CASE("derivative examples") {
  CHECK(act_derivative(Activation(ActivationKind::relu), 5.0) == 1.0);
  CHECK(act_derivative(Activation(ActivationKind::relu), -5.0) == 0.0);
  CHECK(act_derivative(Activation(ActivationKind::silu), 0.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("derivatives match finite differences for every kind") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double h = 1e-5;
  for (auto k : kAllActivations) {
    CAPTURE(name_of(k));
    const Activation a(k);
    double worst = 0.0;
    int checked = 0;
    while (checked < 200) {
      const double x = u(rng);
      if (near_kink(a, x, 1e-3)) continue;
      const double fd = (act_eval(a, x + h) - act_eval(a, x - h)) / (2 * h);
      worst = std::max(worst, rel_err(act_derivative(a, x), fd));
      ++checked;
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("matrix and scalar paths agree") {
  Rng rng(3);
  const Matrix x = random_matrix(3, 7, -4, 4, rng);
  for (auto k : kAllActivations) {
    const Activation a(k);
    const Matrix y = act_eval(a, x, Mode::test);
    const Matrix d = act_derivative(a, x, Mode::test);
    for (Index i = 0; i < x.size(); ++i) {
      CHECK(y.data()[i] == act_eval(a, x.data()[i]));
      CHECK(d.data()[i] == act_derivative(a, x.data()[i]));
    }
  }
}

TEST_CASE("rrelu train mode") {
  const Activation a(ActivationKind::rrelu);
  Rng rng(8);
  const Matrix x = random_matrix(20, 50, -3, 3, rng);
  Matrix slopes;
  const Matrix y = act_eval(a, x, Mode::train, &rng, &slopes);
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    if (v < 0) {
      const double s = y.data()[i] / v;
      CHECK(s > a.rrelu_lower);
      CHECK(s < a.rrelu_upper);
    } else {
      CHECK(y.data()[i] == v);
    }
  }
  const Matrix d = act_derivative(a, x, Mode::train, &slopes);
  for (Index i = 0; i < x.size(); ++i)
    if (x.data()[i] < 0) CHECK(d.data()[i] == slopes.data()[i]);
  CHECK_THROWS(act_derivative(a, x, Mode::train, nullptr));
  CHECK_THROWS(act_eval(a, x, Mode::train, nullptr));

  const Matrix t = act_eval(a, x, Mode::test);
  for (Index i = 0; i < x.size(); ++i)
    if (x.data()[i] < 0) CHECK(t.data()[i] == a.rrelu_test_slope() * x.data()[i]);
}

TEST_CASE("properties") {
  for (auto k : kAllActivations) {
    CAPTURE(name_of(k));
    const Activation a(k);
    double prev = act_eval(a, 3.0);
    for (double x = 3.0; x <= 40.0; x += 0.01) {
      const double v = act_eval(a, x);
      CHECK(v >= prev);
      prev = v;
    }
  }
  const Activation hs(ActivationKind::hardsilu);
  for (double x = 3.0; x < 50.0; x += 0.37) CHECK(act_eval(hs, x) == x);
  for (double x = -3.0; x > -50.0; x -= 0.37) CHECK(act_eval(hs, x) == 0.0);

  const Activation ht(ActivationKind::hardtanh);
  for (double x = -20.0; x < 20.0; x += 0.13) {
    const double v = act_eval(ht, x);
    CHECK(v >= ht.hardtanh_min);
    CHECK(v <= ht.hardtanh_max);
  }

  for (auto k : {ActivationKind::softplus, ActivationKind::gelu}) {
    const Activation a(k);
    for (double x = -10.0; x <= 10.0; x += 0.001)
      REQUIRE(std::abs(act_eval(a, x) - std::max(x, 0.0)) < 0.7);
  }
}

TEST_CASE("extreme inputs stay finite") {
  for (auto k : kAllActivations) {
    const Activation a(k);
    for (double x : {-700.0, -50.0, 50.0, 700.0}) {
      CHECK(std::isfinite(act_eval(a, x)));
      CHECK(std::isfinite(act_derivative(a, x)));
    }
  }
}

TEST_CASE("names and validation") {
  for (auto k : kAllActivations) CHECK(parse_activation(name_of(k)) == k);
  CHECK(parse_activation("telu") == ActivationKind::telu);
  CHECK_THROWS(parse_activation("smoothrelu"));
  CHECK_THROWS(parse_activation("ReLU"));
  Activation a(ActivationKind::rrelu);
  a.rrelu_lower = 0.5;
  a.rrelu_upper = 0.25;
  CHECK_THROWS(a.validate());
  Activation sp(ActivationKind::softplus);
  sp.softplus_beta = 0.0;
  CHECK_THROWS(sp.validate());
  Activation ht(ActivationKind::hardtanh);
  ht.hardtanh_min = 1.0;
  CHECK_THROWS(ht.validate());
}

}
