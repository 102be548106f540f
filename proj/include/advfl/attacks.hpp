#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advfl/network.hpp"

namespace advfl {

/// Hyperparameters for every attack. Defaults are the evaluation settings
/// used throughout (epsilon = 8/255 rounded, PGD-7, C&W with 9 c trials).
struct AttackConfig {
  double epsilon = 0.031;
  double step_alpha = 0.00784;
  int pgd_iters = 7;
  bool pgd_random_init = true;
  double df_overshoot = 1e-6;
  int df_max_iters = 100;
  double cw_kappa = 0.0;
  double cw_lr = 0.01;
  int cw_iters = 10;
  double cw_c_min = 1e-5;
  double cw_c_max = 20.0;
  int cw_c_steps = 9;
  double noise_mu = 0.0;
  double noise_sigma = 0.1;

  void validate() const;
};

enum class AttackKind { none, fgsm, pgd, bim, deepfool, cw, gaussian };

AttackKind parse_attack(const std::string& name);
std::string name_of(AttackKind kind);

/// Elementwise sign with sign(0) = 0.
Matrix sign_of(const Matrix& m);

/// Gradient of the mean hard-label cross-entropy with respect to the input.
Matrix loss_input_gradient(const Network& net, const Matrix& x, std::span<const int> labels);

/// x' = clip01(x + epsilon * sign(grad_x L)).
Matrix fgsm(const Network& net, const Matrix& x, std::span<const int> labels,
            const AttackConfig& cfg);

/// Called with (iteration, iterate) for the start point and after every step.
using IterateObserver = std::function<void(int, const Matrix&)>;

/// Iterated signed-gradient ascent projected onto the L-inf epsilon ball and
/// the [0,1] box after every step. Starts from a uniform draw in the ball
/// when `cfg.pgd_random_init`, otherwise from x (BIM).
Matrix pgd(const Network& net, const Matrix& x, std::span<const int> labels,
           const AttackConfig& cfg, Rng& rng, const IterateObserver& observer = {});

struct DeepFoolResult {
  Matrix adversarial;   // clip01(x + perturbation)
  Matrix perturbation;  // (1 + overshoot) * accumulated step, before clipping
  std::vector<int> iterations;
  std::vector<bool> fooled;
};

/// Multiclass DeepFool. When `labels` is non-empty, examples the network
/// already misclassifies are returned unchanged after zero iterations.
DeepFoolResult deepfool(const Network& net, const Matrix& x, const AttackConfig& cfg,
                        std::span<const int> labels = {});

struct CwResult {
  Matrix adversarial;
  std::vector<bool> success;
  Vector l2;  // ||x' - x||_2 per example; 0 for failures
};

/// Carlini-Wagner L2: minimises ||eta||^2 + c * max(z_y - max_{i!=y} z_i, -kappa)
/// over x' = (tanh(w) + 1) / 2 with plain gradient steps on w, bisecting c
/// in log space over [c_min, c_max]. Returns the smallest successful
/// perturbation found, or x itself when every trial fails.
CwResult cw_l2(const Network& net, const Matrix& x, std::span<const int> labels,
               const AttackConfig& cfg);

/// N(mu, sigma^2) samples, no clipping.
Matrix sample_gaussian(Index rows, Index cols, double mu, double sigma, Rng& rng);

/// clip01(x + N(mu, sigma^2)).
Matrix gaussian_noise(const Matrix& x, double mu, double sigma, Rng& rng);

struct AttackOutput {
  Matrix adversarial;
  std::vector<bool> failed;  // attacks that report failure (DeepFool, C&W)
};

/// Dispatches to the named attack. `none` returns x unchanged.
AttackOutput run_attack(AttackKind kind, const Network& net, const Matrix& x,
                        std::span<const int> labels, const AttackConfig& cfg, Rng& rng);

}  // namespace advfl
