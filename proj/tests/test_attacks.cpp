#include "doctest.h"

#include <cfloat>
#include <cmath>

#include "advfl/attacks.hpp"
#include "advfl/models.hpp"
#include "support.hpp"

using namespace advfl;
using namespace advfl::testing;

namespace {

constexpr double kBallSlack = 4 * DBL_EPSILON;

std::vector<int> predictions(const Network& net, const Matrix& x) {
  const Matrix z = net.forward(x);
  std::vector<int> out;
  for (Index i = 0; i < z.rows(); ++i) out.push_back(static_cast<int>(argmax_row(z.row(i))));
  return out;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("default budget is about 8/255") {
  const AttackConfig cfg;
  CHECK(cfg.epsilon == 0.031);
  CHECK(std::abs(cfg.epsilon - 8.0 / 255.0) < 5e-4);
  CHECK(cfg.step_alpha == 0.00784);
  CHECK(cfg.pgd_iters == 7);
  CHECK(cfg.df_overshoot == 1e-6);
  CHECK(cfg.df_max_iters == 100);
  CHECK(cfg.cw_kappa == 0.0);
  CHECK(cfg.cw_lr == 0.01);
  CHECK(cfg.cw_iters == 10);
  CHECK(cfg.cw_c_min == 1e-5);
  CHECK(cfg.cw_c_max == 20.0);
  CHECK(cfg.noise_mu == 0.0);
  CHECK(cfg.noise_sigma == 0.1);
}

TEST_CASE("fgsm with a flat network leaves x unchanged") {
  Network net(Shape{1, 1, 4});
  net.add(FlattenLayer{}).add(DenseLayer{4, 3});
  net.params().setZero();
  Rng rng(1);
  const Matrix x = random_matrix(5, 4, 0, 1, rng);
  const std::vector<int> y{0, 1, 2, 0, 1};
  CHECK(fgsm(net, x, y, AttackConfig{}) == x);
}

TEST_CASE("fgsm on a linear model moves against the margin") {
  Vector w(2);
  w << 1, -1;
  const Network net = linear_binary(w, 0.0);
  Matrix x(2, 2);
  x << 0.5, 0.4, 0.3, 0.6;
  const std::vector<int> y{0, 1};
  AttackConfig cfg;
  const Matrix adv = fgsm(net, x, y, cfg);
  // Label 0: the loss grows as w.x falls, so the step is -eps*sign(w).
  CHECK(adv(0, 0) == x(0, 0) - cfg.epsilon);
  CHECK(adv(0, 1) == x(0, 1) + cfg.epsilon);
  CHECK(adv(1, 0) == x(1, 0) + cfg.epsilon);
  CHECK(adv(1, 1) == x(1, 1) - cfg.epsilon);
}

TEST_CASE("sign convention") {
  Matrix m(1, 3);
  m << -2, 0, 0.5;
  Matrix s(1, 3);
  s << -1, 0, 1;
  CHECK(sign_of(m) == s);
}

TEST_CASE("pgd with one full step equals fgsm bit for bit") {
  Rng rng(2);
  const Network net = build_mlp(Shape{1, 4, 4}, {8}, Activation(ActivationKind::telu), 3, 4);
  const Matrix x = random_matrix(6, 16, 0, 1, rng);
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  AttackConfig cfg;
  cfg.pgd_iters = 1;
  cfg.step_alpha = cfg.epsilon;
  cfg.pgd_random_init = false;
  CHECK(pgd(net, x, y, cfg, rng) == fgsm(net, x, y, cfg));
}

TEST_CASE("pgd iterates stay in the ball and the box") {
  Rng rng(3);
  const Network net = build_mlp(Shape{1, 3, 3}, {6}, Activation{}, 2, 5);
  for (int run = 0; run < 100; ++run) {
    AttackConfig cfg;
    std::uniform_real_distribution<double> e(0.001, 0.3);
    cfg.epsilon = e(rng);
    cfg.step_alpha = e(rng);
    cfg.pgd_iters = 1 + static_cast<int>(rng() % 10);
    cfg.pgd_random_init = rng() % 2 == 0;
    const Matrix x = random_matrix(4, 9, 0, 1, rng);
    const std::vector<int> y{0, 1, 1, 0};
    bool ok = true;
    pgd(net, x, y, cfg, rng, [&](int, const Matrix& it) {
      ok = ok && (it - x).cwiseAbs().maxCoeff() <= cfg.epsilon + kBallSlack;
      ok = ok && it.minCoeff() >= 0.0 && it.maxCoeff() <= 1.0;
    });
    REQUIRE(ok);
  }
}

TEST_CASE("fgsm increases the loss for small epsilon") {
  Rng rng(4);
  const Network net = build_mlp(Shape{1, 4, 4}, {10}, Activation(ActivationKind::softplus), 3, 6);
  AttackConfig cfg;
  cfg.epsilon = 1e-3;
  int up = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const Matrix x = random_matrix(1, 16, 0.01, 0.99, rng);
    const std::vector<int> y{static_cast<int>(rng() % 3)};
    const Matrix t = one_hot(y, 3);
    const double before = soft_cross_entropy(net.forward(x), t, nullptr);
    const double after = soft_cross_entropy(net.forward(fgsm(net, x, y, cfg)), t, nullptr);
    if (after >= before) ++up;
  }
  CHECK(up >= 0.95 * n);
}

TEST_CASE("deepfool") {
  SUBCASE("already misclassified input is returned untouched") {
    Vector w(3);
    w << 1, 2, -1;
    const Network net = linear_binary(w, 0.1);
    Matrix x(1, 3);
    x << 0.5, 0.5, 0.5;  // f > 0: predicted class 0
    const std::vector<int> y{1};
    const DeepFoolResult r = deepfool(net, x, AttackConfig{}, y);
    CHECK(r.iterations[0] == 0);
    CHECK(r.perturbation.isZero(0.0));
    CHECK(r.adversarial == x);
  }
  SUBCASE("binary linear model matches the hyperplane projection") {
    Rng rng(5);
    std::normal_distribution<double> g;
    for (int m = 0; m < 20; ++m) {
      Vector w(6);
      for (Index i = 0; i < 6; ++i) w(i) = g(rng);
      const Matrix x = random_matrix(1, 6, 0.3, 0.7, rng);
      const double b = -w.dot(x.row(0).transpose()) + 0.05 * w.norm() * (m % 2 ? 1 : -1);
      const Network net = linear_binary(w, b);
      const AttackConfig cfg;
      const DeepFoolResult r = deepfool(net, x, cfg);
      const double f = w.dot(x.row(0).transpose()) + b;
      const Vector expect = -(f / w.squaredNorm()) * w * (1 + cfg.df_overshoot);
      CHECK(r.fooled[0]);
      CHECK((r.perturbation.row(0).transpose() - expect).norm() <= 1e-6 * expect.norm());
    }
  }
  SUBCASE("flat network is reported as not fooled") {
    Network net(Shape{1, 1, 3});
    net.add(FlattenLayer{}).add(DenseLayer{3, 2});
    net.params().setZero();
    const DeepFoolResult r = deepfool(net, Matrix::Constant(1, 3, 0.5), AttackConfig{});
    CHECK_FALSE(r.fooled[0]);
  }
}

TEST_CASE("carlini wagner") {
  SUBCASE("already misclassified input has ~zero perturbation") {
    Vector w(3);
    w << 1, 2, -1;
    const Network net = linear_binary(w, 0.1);
    Matrix x(1, 3);
    x << 0.5, 0.5, 0.5;
    const std::vector<int> y{1};
    const CwResult r = cw_l2(net, x, y, AttackConfig{});
    CHECK(r.success[0]);
    CHECK(r.l2(0) < 1e-5);
  }
  SUBCASE("binary linear model is close to the minimal distance") {
    Rng rng(6);
    std::normal_distribution<double> g;
    AttackConfig cfg;
    for (int m = 0; m < 10; ++m) {
      Vector w(5);
      for (Index i = 0; i < 5; ++i) w(i) = g(rng);
      const Matrix x = random_matrix(1, 5, 0.3, 0.7, rng);
      const double dist = 0.02 + 0.06 * (m / 10.0);
      const double b = -w.dot(x.row(0).transpose()) + dist * w.norm();
      const Network net = linear_binary(w, b);
      const std::vector<int> y{0};
      const CwResult r = cw_l2(net, x, y, cfg);
      REQUIRE(r.success[0]);
      CHECK(std::abs(r.l2(0) - dist) <= 0.1 * dist);
      CHECK(predictions(net, r.adversarial)[0] == 1);
    }
  }
  SUBCASE("unreachable target fails and returns x") {
    Network net(Shape{1, 1, 3});
    net.add(FlattenLayer{}).add(DenseLayer{3, 2});
    net.params().setZero();
    net.params()(6) = 5.0;  // class 0 always wins by a constant margin
    const Matrix x = Matrix::Constant(1, 3, 0.5);
    const std::vector<int> y{0};
    const CwResult r = cw_l2(net, x, y, AttackConfig{});
    CHECK_FALSE(r.success[0]);
    CHECK(r.adversarial == x);
  }
}

TEST_CASE("gaussian noise") {
  Rng rng(7);
  const Matrix x = random_matrix(3, 5, 0, 1, rng);
  CHECK(gaussian_noise(x, 0.0, 0.0, rng) == x);
  const Matrix noisy = gaussian_noise(x, 0.0, 0.5, rng);
  CHECK(noisy.minCoeff() >= 0.0);
  CHECK(noisy.maxCoeff() <= 1.0);
  CHECK_THROWS(gaussian_noise(x, 0.0, -1.0, rng));

  const Matrix s = sample_gaussian(1000, 1000, 0.0, 0.1, rng);
  const double mean = s.mean();
  const double sd = std::sqrt((s.array() - mean).square().sum() / static_cast<double>(s.size() - 1));
  CHECK(std::abs(mean) < 0.01 * 0.1);
  CHECK(std::abs(sd - 0.1) < 0.01 * 0.1);
  const Matrix s2 = sample_gaussian(1000, 1000, 0.5, 0.1, rng);
  CHECK(std::abs(s2.mean() - 0.5) < 0.01 * 0.5);
}

TEST_CASE("dispatch and determinism") {
  Rng rng(8);
  const Network net = build_mlp(Shape{1, 3, 3}, {5}, Activation(ActivationKind::rrelu), 3, 2);
  const Matrix x = random_matrix(4, 9, 0, 1, rng);
  const std::vector<int> y{0, 1, 2, 0};
  const AttackConfig cfg;
  Rng a(9);
  CHECK(run_attack(AttackKind::none, net, x, y, cfg, a).adversarial == x);
  for (auto k : {AttackKind::fgsm, AttackKind::pgd, AttackKind::bim, AttackKind::deepfool,
                 AttackKind::cw, AttackKind::gaussian}) {
    CAPTURE(name_of(k));
    Rng r1(10), r2(10);
    CHECK(run_attack(k, net, x, y, cfg, r1).adversarial ==
          run_attack(k, net, x, y, cfg, r2).adversarial);
    CHECK(parse_attack(name_of(k)) == k);
  }
  AttackConfig bim = cfg;
  bim.pgd_random_init = false;
  Rng r1(11), r2(12);
  CHECK(run_attack(AttackKind::bim, net, x, y, cfg, r1).adversarial == pgd(net, x, y, bim, r2));
  CHECK_THROWS(parse_attack("jsma"));
  AttackConfig bad;
  bad.cw_c_min = 30.0;
  CHECK_THROWS(bad.validate());
}

}
