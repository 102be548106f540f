#include "advfl/attacks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "advfl/loss.hpp"

namespace advfl {

namespace {

Matrix clip01(const Matrix& m) { return m.cwiseMax(0.0).cwiseMin(1.0); }

Matrix project_ball(const Matrix& m, const Matrix& center, double eps) {
  return m.cwiseMax((center.array() - eps).matrix()).cwiseMin((center.array() + eps).matrix());
}

void check_labels(const Matrix& x, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != x.rows())
    throw std::invalid_argument("attack: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(x.rows()) + " examples");
}

// One projected signed-gradient step; FGSM is this step from x with
// alpha = epsilon.
Matrix signed_step(const Network& net, const Matrix& current, const Matrix& origin,
                   std::span<const int> labels, double alpha, double eps) {
  const Matrix step = current + alpha * sign_of(loss_input_gradient(net, current, labels));
  return clip01(project_ball(step, origin, eps));
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("attack.epsilon must be > 0");
  if (!(step_alpha > 0.0)) throw std::invalid_argument("attack.step_alpha must be > 0");
  if (pgd_iters < 1) throw std::invalid_argument("attack.pgd_iters must be >= 1");
  if (df_max_iters < 1) throw std::invalid_argument("attack.df_max_iters must be >= 1");
  if (cw_iters < 1) throw std::invalid_argument("attack.cw_iters must be >= 1");
  if (cw_c_steps < 1) throw std::invalid_argument("attack.cw_c_steps must be >= 1");
  if (!(cw_c_min > 0.0 && cw_c_min < cw_c_max))
    throw std::invalid_argument("attack.c_min must be positive and below c_max");
  if (!(cw_lr > 0.0)) throw std::invalid_argument("attack.cw_lr must be > 0");
  if (!(df_overshoot >= 0.0)) throw std::invalid_argument("attack.df_overshoot must be >= 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("attack.sigma must be >= 0");
}

AttackKind parse_attack(const std::string& name) {
  if (name == "none" || name == "identity") return AttackKind::none;
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "bim") return AttackKind::bim;
  if (name == "deepfool") return AttackKind::deepfool;
  if (name == "cw") return AttackKind::cw;
  if (name == "gaussian") return AttackKind::gaussian;
  throw std::invalid_argument("unknown attack '" + name + "'");
}

std::string name_of(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::bim: return "bim";
    case AttackKind::deepfool: return "deepfool";
    case AttackKind::cw: return "cw";
    case AttackKind::gaussian: return "gaussian";
  }
  return "?";
}

Matrix sign_of(const Matrix& m) {
  return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Matrix loss_input_gradient(const Network& net, const Matrix& x, std::span<const int> labels) {
  check_labels(x, labels);
  return loss_and_grads(net, x, one_hot(labels, net.num_classes()), Mode::test, nullptr, false)
      .grad_input;
}

Matrix fgsm(const Network& net, const Matrix& x, std::span<const int> labels,
            const AttackConfig& cfg) {
  cfg.validate();
  return signed_step(net, x, x, labels, cfg.epsilon, cfg.epsilon);
}

Matrix pgd(const Network& net, const Matrix& x, std::span<const int> labels,
           const AttackConfig& cfg, Rng& rng, const IterateObserver& observer) {
  cfg.validate();
  check_labels(x, labels);
  Matrix current = x;
  if (cfg.pgd_random_init) {
    std::uniform_real_distribution<double> init(-cfg.epsilon, cfg.epsilon);
    for (Index i = 0; i < current.size(); ++i) current.data()[i] += init(rng);
    current = clip01(project_ball(current, x, cfg.epsilon));
  }
  if (observer) observer(0, current);
  for (int t = 1; t <= cfg.pgd_iters; ++t) {
    current = signed_step(net, current, x, labels, cfg.step_alpha, cfg.epsilon);
    if (observer) observer(t, current);
  }
  return current;
}

DeepFoolResult deepfool(const Network& net, const Matrix& x, const AttackConfig& cfg,
                        std::span<const int> labels) {
  cfg.validate();
  if (!labels.empty()) check_labels(x, labels);
  const Index n_classes = net.num_classes();
  DeepFoolResult out;
  out.adversarial = x;
  out.perturbation = Matrix::Zero(x.rows(), x.cols());
  out.iterations.assign(static_cast<std::size_t>(x.rows()), 0);
  out.fooled.assign(static_cast<std::size_t>(x.rows()), false);
  const Matrix identity = Matrix::Identity(n_classes, n_classes);
  const double scale = 1.0 + cfg.df_overshoot;

  for (Index b = 0; b < x.rows(); ++b) {
    const Matrix x0 = x.row(b);
    const Index original = argmax_row(net.forward(x0).row(0));
    if (!labels.empty() && original != labels[static_cast<std::size_t>(b)]) {
      out.fooled[static_cast<std::size_t>(b)] = true;
      continue;
    }
    Matrix r_total = Matrix::Zero(1, x.cols());
    int iters = 0;
    bool fooled = false;
    while (true) {
      const Matrix candidate = clip01(x0 + scale * r_total);
      const Matrix logits = net.forward(candidate);
      if (argmax_row(logits.row(0)) != original) {
        fooled = true;
        break;
      }
      if (iters >= cfg.df_max_iters) break;
      // Jacobian of all logits at the current point, one row per class.
      const Matrix jac = net.input_gradient(candidate.replicate(n_classes, 1), identity);
      double best = std::numeric_limits<double>::infinity();
      Matrix best_dir;
      for (Index k = 0; k < n_classes; ++k) {
        if (k == original) continue;
        const Matrix w = jac.row(k) - jac.row(original);
        const double f = logits(0, k) - logits(0, original);
        const double norm = w.norm();
        if (norm == 0.0) continue;
        const double dist = std::abs(f) / norm;
        if (dist < best) {
          best = dist;
          best_dir = w / norm;
        }
      }
      if (!std::isfinite(best)) break;  // flat logits: no direction to move
      r_total += best * best_dir;
      ++iters;
    }
    out.iterations[static_cast<std::size_t>(b)] = iters;
    out.fooled[static_cast<std::size_t>(b)] = fooled;
    out.perturbation.row(b) = scale * r_total;
    out.adversarial.row(b) = clip01(x0 + scale * r_total);
  }
  return out;
}

CwResult cw_l2(const Network& net, const Matrix& x, std::span<const int> labels,
               const AttackConfig& cfg) {
  cfg.validate();
  check_labels(x, labels);
  const Index rows = x.rows();
  const Index n_classes = net.num_classes();
  static constexpr double kBoxMargin = 1e-6;
  const Matrix w0 = x.unaryExpr([](double v) {
    return std::atanh(2.0 * std::clamp(v, kBoxMargin, 1.0 - kBoxMargin) - 1.0);
  });

  CwResult out;
  out.adversarial = x;
  out.success.assign(static_cast<std::size_t>(rows), false);
  out.l2 = Vector::Zero(rows);
  Vector best_norm = Vector::Constant(rows, std::numeric_limits<double>::infinity());
  Vector lo = Vector::Constant(rows, std::log(cfg.cw_c_min));
  Vector hi = Vector::Constant(rows, std::log(cfg.cw_c_max));

  for (int trial = 0; trial < cfg.cw_c_steps; ++trial) {
    const Vector c = ((lo + hi) / 2.0).array().exp();
    std::vector<bool> trial_success(static_cast<std::size_t>(rows), false);
    Matrix w = w0;
    for (int it = 0; it <= cfg.cw_iters; ++it) {
      const Matrix xp = (w.array().tanh() + 1.0) / 2.0;
      const Matrix logits = net.forward(xp);
      Matrix seed = Matrix::Zero(rows, n_classes);
      for (Index b = 0; b < rows; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        Index other = y == 0 ? 1 : 0;
        for (Index k = 0; k < n_classes; ++k)
          if (k != y && logits(b, k) > logits(b, other)) other = k;
        if (argmax_row(logits.row(b)) != y) {
          trial_success[static_cast<std::size_t>(b)] = true;
          const double norm = (xp.row(b) - x.row(b)).norm();
          if (norm < best_norm(b)) {
            best_norm(b) = norm;
            out.adversarial.row(b) = xp.row(b);
          }
        }
        const double margin = logits(b, y) - logits(b, other);
        if (margin > -cfg.cw_kappa) {
          seed(b, y) = c(b);
          seed(b, other) = -c(b);
        }
      }
      if (it == cfg.cw_iters) break;
      const Matrix grad_x = 2.0 * (xp - x) + net.input_gradient(xp, seed);
      const Matrix dxdw = (1.0 - w.array().tanh().square()) / 2.0;
      w -= cfg.cw_lr * grad_x.cwiseProduct(dxdw);
    }
    for (Index b = 0; b < rows; ++b) {
      const double mid = (lo(b) + hi(b)) / 2.0;
      if (trial_success[static_cast<std::size_t>(b)])
        hi(b) = mid;
      else
        lo(b) = mid;
    }
  }
  for (Index b = 0; b < rows; ++b) {
    if (std::isfinite(best_norm(b))) {
      out.success[static_cast<std::size_t>(b)] = true;
      out.l2(b) = best_norm(b);
    }
  }
  return out;
}

Matrix sample_gaussian(Index rows, Index cols, double mu, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian noise: sigma must be >= 0");
  Matrix m(rows, cols);
  if (sigma == 0.0) {
    m.setConstant(mu);
    return m;
  }
  std::normal_distribution<double> dist(mu, sigma);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix gaussian_noise(const Matrix& x, double mu, double sigma, Rng& rng) {
  if (sigma == 0.0 && mu == 0.0) return x;
  return clip01(x + sample_gaussian(x.rows(), x.cols(), mu, sigma, rng));
}

AttackOutput run_attack(AttackKind kind, const Network& net, const Matrix& x,
                        std::span<const int> labels, const AttackConfig& cfg, Rng& rng) {
  AttackOutput out;
  out.failed.assign(static_cast<std::size_t>(x.rows()), false);
  switch (kind) {
    case AttackKind::none:
      out.adversarial = x;
      break;
    case AttackKind::fgsm:
      out.adversarial = fgsm(net, x, labels, cfg);
      break;
    case AttackKind::pgd:
      out.adversarial = pgd(net, x, labels, cfg, rng);
      break;
    case AttackKind::bim: {
      AttackConfig bim = cfg;
      bim.pgd_random_init = false;
      out.adversarial = pgd(net, x, labels, bim, rng);
      break;
    }
    case AttackKind::deepfool: {
      DeepFoolResult r = deepfool(net, x, cfg, labels);
      out.adversarial = std::move(r.adversarial);
      for (std::size_t i = 0; i < r.fooled.size(); ++i) out.failed[i] = !r.fooled[i];
      break;
    }
    case AttackKind::cw: {
      CwResult r = cw_l2(net, x, labels, cfg);
      out.adversarial = std::move(r.adversarial);
      for (std::size_t i = 0; i < r.success.size(); ++i) out.failed[i] = !r.success[i];
      break;
    }
    case AttackKind::gaussian:
      out.adversarial = gaussian_noise(x, cfg.noise_mu, cfg.noise_sigma, rng);
      break;
  }
  return out;
}

}  // namespace advfl
