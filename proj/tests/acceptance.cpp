// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every tolerance and experiment setting is pinned here.

#include <cfloat>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "advfl/experiment.hpp"
#include "advfl/regression.hpp"
#include "support.hpp"

using namespace advfl;
using namespace advfl::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kKinkMargin = 1e-3;
constexpr int kGradPoints = 100;
constexpr int kPgdRuns = 1000;
constexpr double kBallSlack = 4 * DBL_EPSILON;
constexpr int kLinearModels = 50;
constexpr double kDeepFoolRelTol = 1e-6;
constexpr double kCwRelTol = 0.10;
constexpr double kSoftLabelSumTol = 1e-12;
constexpr int kPartitionSeeds = 100;
constexpr double kAtRobustGap = 0.20;
constexpr double kAtNaturalSlack = 0.15;
constexpr double kShareRobustGap = 0.10;
constexpr double kSlopeTol = 0.02;
constexpr double kInterceptTol = 0.05;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " [over time budget " + std::to_string(budget_s) + "s]";
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title,
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_wall_time(const fs::path& p) {
  std::ifstream in(p);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("wall_time");
    out += j.dump() + "\n";
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advfl_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json run_report(Command cmd, const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path out = scratch("run");
  run_experiment(cmd, cfg, seed, out);
  auto r = nlohmann::json::parse(slurp(out / "report.json"));
  fs::remove_all(out);
  return r;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  double worst = 0.0;
  for (auto kind : kAllActivations) {
    const Activation act(kind);
    const Network net = build_mlp(Shape{1, 2, 3}, {5, 4}, act, 3, 100 + static_cast<int>(kind));
    Rng rng(static_cast<std::uint64_t>(kind) + 1);
    int accepted = 0, tries = 0;
    double kind_worst = 0.0;
    const Mode mode = kind == ActivationKind::rrelu ? Mode::train : Mode::test;
    while (accepted < kGradPoints && tries < 50 * kGradPoints) {
      ++tries;
      const Matrix x = random_matrix(1, 6, -2, 2, rng);
      const Matrix t = random_targets(1, 3, rng);
      const std::uint64_t seed = rng();
      if (kink_distance(net, x, mode, seed) < kKinkMargin) continue;
      const GradCheck g = check_gradients(net, x, t, mode, seed, kGradStep);
      kind_worst = std::max({kind_worst, g.max_param_err, g.max_input_err});
      ++accepted;
    }
    if (accepted < kGradPoints || kind_worst >= kGradRelTol) {
      o.pass = false;
      o.detail += std::string(name_of(kind)) + " worst " + fmt("%.2e", kind_worst) + " over " +
                  std::to_string(accepted) + " points; ";
    }
    worst = std::max(worst, kind_worst);
  }
  o.detail += "11 activations x 100 points, worst rel err " + fmt("%.2e", worst);
  return o;
}

Outcome pgd_invariants() {
  Outcome o;
  Rng rng(2024);
  int ball_violations = 0, fgsm_mismatch = 0;
  std::uniform_real_distribution<double> u(0.001, 0.3);
  for (int run = 0; run < kPgdRuns; ++run) {
    const Network net =
        build_mlp(Shape{1, 3, 3}, {6}, Activation(kAllActivations[run % kAllActivations.size()]), 3,
                  static_cast<std::uint64_t>(run));
    AttackConfig cfg;
    cfg.epsilon = u(rng);
    cfg.step_alpha = u(rng);
    cfg.pgd_iters = 1 + static_cast<int>(rng() % 10);
    cfg.pgd_random_init = rng() % 2 == 0;
    const Matrix x = random_matrix(3, 9, 0, 1, rng);
    const std::vector<int> y{static_cast<int>(rng() % 3), static_cast<int>(rng() % 3),
                             static_cast<int>(rng() % 3)};
    bool ok = true;
    pgd(net, x, y, cfg, rng, [&](int, const Matrix& it) {
      ok = ok && (it - x).cwiseAbs().maxCoeff() <= cfg.epsilon + kBallSlack;
      ok = ok && it.minCoeff() >= 0.0 && it.maxCoeff() <= 1.0;
    });
    if (!ok) ++ball_violations;

    AttackConfig one = cfg;
    one.pgd_iters = 1;
    one.step_alpha = one.epsilon;
    one.pgd_random_init = false;
    if (!(pgd(net, x, y, one, rng) == fgsm(net, x, y, one))) ++fgsm_mismatch;
  }
  o.pass = ball_violations == 0 && fgsm_mismatch == 0;
  o.detail = std::to_string(kPgdRuns) + " runs, " + std::to_string(ball_violations) +
             " ball/box violations, " + std::to_string(fgsm_mismatch) + " PGD-1 vs FGSM mismatches";
  return o;
}

Outcome linear_oracles() {
  Outcome o;
  Rng rng(77);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> dist_u(0.02, 0.1);
  double df_worst = 0.0, cw_worst = 0.0;
  int cw_fail = 0;
  const AttackConfig cfg;  // evaluation defaults
  for (int m = 0; m < kLinearModels; ++m) {
    const Index d = 4 + static_cast<Index>(rng() % 7);
    Vector w(d);
    for (Index i = 0; i < d; ++i) w(i) = g(rng);
    const Matrix x = random_matrix(1, d, 0.3, 0.7, rng);
    const double dist = dist_u(rng);
    // f(x) = +dist*||w||: class 0 is predicted, the boundary is `dist` away.
    const double b = -w.dot(x.row(0).transpose()) + dist * w.norm();
    const Network net = linear_binary(w, b);
    const double f = w.dot(x.row(0).transpose()) + b;

    const DeepFoolResult df = deepfool(net, x, cfg);
    const Vector expect = -(f / w.squaredNorm()) * w * (1 + cfg.df_overshoot);
    const double df_err = (df.perturbation.row(0).transpose() - expect).norm() / expect.norm();
    df_worst = std::max(df_worst, df.fooled[0] ? df_err : 1.0);

    const std::vector<int> y{0};
    const CwResult cw = cw_l2(net, x, y, cfg);
    if (!cw.success[0]) {
      ++cw_fail;
      continue;
    }
    cw_worst = std::max(cw_worst, std::abs(cw.l2(0) - dist) / dist);
  }
  o.pass = df_worst <= kDeepFoolRelTol && cw_fail == 0 && cw_worst <= kCwRelTol;
  o.detail = std::to_string(kLinearModels) + " models, DeepFool worst rel err " + fmt("%.2e", df_worst) +
             ", C&W worst rel gap " + fmt("%.3f", cw_worst) + ", C&W failures " + std::to_string(cw_fail);
  return o;
}

Outcome soft_label_values() {
  const std::vector<int> y{0, 4, 9};
  const Matrix t = soft_labels(y, 10, 0.05);
  double worst_sum = 0.0, worst_val = 0.0;
  for (Index i = 0; i < t.rows(); ++i) {
    worst_sum = std::max(worst_sum, std::abs(t.row(i).sum() - 1.0));
    for (Index c = 0; c < 10; ++c) {
      const double want = c == y[static_cast<std::size_t>(i)] ? 0.955 : 0.005;
      worst_val = std::max(worst_val, std::abs(t(i, c) - want));
    }
  }
  return {worst_sum <= kSoftLabelSumTol && worst_val <= 1e-15,
          "true 0.955 / other 0.005, worst value err " + fmt("%.1e", worst_val) + ", worst row-sum err " +
              fmt("%.1e", worst_sum)};
}

Outcome schedule() {
  const bool ok = lr_at_epoch(99) == 0.001 && lr_at_epoch(100) == 0.0001 &&
                  lr_at_epoch(149) == 0.0001 && lr_at_epoch(150) == 0.00001 &&
                  lr_at_epoch(0) == 0.001;
  return {ok, "epochs 0/99/100/149/150 -> " + fmt("%g", lr_at_epoch(0)) + "/" + fmt("%g", lr_at_epoch(99)) +
                  "/" + fmt("%g", lr_at_epoch(100)) + "/" + fmt("%g", lr_at_epoch(149)) + "/" +
                  fmt("%g", lr_at_epoch(150))};
}

Outcome partitions() {
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i)
    for (int c = 0; c < 10; ++c) y.push_back(c);
  int violations = 0;
  std::string first;
  auto flag = [&](bool ok, const std::string& what) {
    if (!ok) {
      if (violations++ == 0) first = what;
    }
  };
  for (auto strategy : {Strategy::iid, Strategy::one_class, Strategy::two_class, Strategy::dirichlet}) {
    for (int seed = 0; seed < kPartitionSeeds; ++seed) {
      PartitionConfig cfg;
      cfg.strategy = strategy;
      cfg.clients = 5;
      cfg.beta = 0.1;
      const PartitionPlan plan = make_partition_plan(y, 10, cfg, static_cast<std::uint64_t>(seed));
      const std::string tag = name_of(strategy) + " seed " + std::to_string(seed);
      // Disjointness and coverage of the whole index range.
      std::vector<int> hits(y.size(), 0);
      for (const auto& l : plan.client_indices)
        for (Index i : l) ++hits[static_cast<std::size_t>(i)];
      for (Index i : plan.unassigned) ++hits[static_cast<std::size_t>(i)];
      flag(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }), tag + ": cover");
      const auto hist = class_histograms(plan, y, 10, false);
      for (std::size_t k = 0; k < hist.size(); ++k) {
        const auto nz = std::count_if(hist[k].begin(), hist[k].end(), [](Index v) { return v > 0; });
        if (strategy == Strategy::one_class) flag(nz == 1, tag + ": purity");
        if (strategy == Strategy::two_class) flag(nz == 2, tag + ": two classes");
      }
      if (strategy == Strategy::iid)
        for (int c = 0; c < 10; ++c) {
          Index lo = hist[0][static_cast<std::size_t>(c)], hi = lo;
          for (const auto& row : hist) {
            lo = std::min(lo, row[static_cast<std::size_t>(c)]);
            hi = std::max(hi, row[static_cast<std::size_t>(c)]);
          }
          flag(hi - lo <= 1, tag + ": iid balance");
        }
      if (strategy == Strategy::dirichlet)
        for (int c = 0; c < 10; ++c) {
          Index total = 0;
          for (const auto& row : hist) total += row[static_cast<std::size_t>(c)];
          flag(total == 1000, tag + ": count conservation");
        }
    }
  }
  return {violations == 0, std::to_string(4 * kPartitionSeeds) + " plans on 10,000 labels, " +
                               std::to_string(violations) + " violations" +
                               (violations ? " (first: " + first + ")" : "")};
}

Outcome fedavg_algebra() {
  const std::vector<Vector> one{Vector::LinSpaced(7, -3, 3)};
  const bool identity = fedavg(one, std::vector<Index>{42}) == one[0];
  const std::vector<Vector> pair{Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)};
  const bool mean = fedavg(pair, std::vector<Index>{10, 10})(0) == 2.0;
  const std::vector<Vector> weighted{Vector::Constant(1, 0.0), Vector::Constant(1, 4.0)};
  const bool wmean = fedavg(weighted, std::vector<Index>{100, 300})(0) == 3.0;
  // Integer parameters with quarter weights keep the affine identity exact.
  const std::vector<Vector> ms{Vector::LinSpaced(4, 0, 3), Vector::LinSpaced(4, 8, -4)};
  std::vector<Vector> shifted;
  for (const auto& m : ms) shifted.push_back((2.0 * m.array() + 1.0).matrix());
  const std::vector<Index> sizes{1, 3};
  const bool affine = fedavg(shifted, sizes) == (2.0 * fedavg(ms, sizes).array() + 1.0).matrix();
  return {identity && mean && wmean && affine,
          std::string("K=1 identity ") + (identity ? "ok" : "bad") + ", mean " + (mean ? "ok" : "bad") +
              ", (100,300)/(0,4) -> " + fmt("%g", fedavg(weighted, std::vector<Index>{100, 300})(0)) +
              ", affine " + (affine ? "ok" : "bad")};
}

ExperimentConfig at_config(bool adversarial) {
  auto doc = nlohmann::json::parse(R"({
    "data": {"num_classes": 2, "image_size": 8, "train_per_class": 100, "test_per_class": 250,
             "blob_amplitude": 0.15, "blob_sigma": 2.0, "jitter": 2.0, "noise_sigma": 0.05,
             "background_shift": 0.03, "crop_padding": 0, "hflip_prob": 0.0},
    "nn": {"model": "mini_resnet", "depth": 1, "width": 4, "activation": "relu", "lr": 0.02,
           "epochs": 20, "batch_size": 32},
    "attack": {"epsilon": 0.031, "step_alpha": 0.00784, "pgd_iters": 7},
    "eval": {"attacks": ["fgsm"], "test_noise_sigma": 0.0}
  })");
  doc["data"]["include_pgd"] = adversarial;
  doc["data"]["include_gaussian"] = adversarial;
  return parse_config(doc);
}

Outcome at_benefit() {
  Outcome o;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto at = run_report(Command::train_central, at_config(true), seed);
    const auto st = run_report(Command::train_central, at_config(false), seed);
    const double at_nat = at["natural_acc"], st_nat = st["natural_acc"];
    const double at_rob = at["robust_acc"]["fgsm"], st_rob = st["robust_acc"]["fgsm"];
    const bool ok = at_rob - st_rob >= kAtRobustGap && std::abs(at_nat - st_nat) <= kAtNaturalSlack;
    o.pass = o.pass && ok;
    o.detail += "seed " + std::to_string(seed) + ": robust " + fmt("%.3f", st_rob) + " -> " +
                fmt("%.3f", at_rob) + ", natural " + fmt("%.3f", st_nat) + " -> " + fmt("%.3f", at_nat) + "; ";
  }
  return o;
}

ExperimentConfig share_config() {
  return parse_config(nlohmann::json::parse(R"({
    "data": {"num_classes": 10, "image_size": 8, "train_per_class": 60, "test_per_class": 100,
             "crop_padding": 0, "hflip_prob": 0.0},
    "nn": {"model": "mlp", "hidden": [32], "activation": "relu", "lr": 0.05, "batch_size": 32},
    "attack": {"epsilon": 0.031, "step_alpha": 0.00784, "pgd_iters": 7},
    "partition": {"strategy": "two_class", "shared_per_class": 20, "sweep": [0.0, 0.5]},
    "fed": {"K": 5, "R": 10, "E": 3, "batch_size": 32},
    "eval": {"attacks": ["fgsm"]}
  })"));
}

Outcome share_benefit() {
  Outcome o;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = run_report(Command::train_fed, share_config(), seed);
    const double none = r["runs"][0]["robust_acc"]["fgsm"];
    const double half = r["runs"][1]["robust_acc"]["fgsm"];
    o.pass = o.pass && half - none >= kShareRobustGap;
    o.detail += "seed " + std::to_string(seed) + ": robust " + fmt("%.3f", none) + " (alpha 0) -> " +
                fmt("%.3f", half) + " (alpha 0.5); ";
  }
  return o;
}

Outcome regression() {
  Outcome o;
  int misses = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<RegressionPoint> pts;
    for (int x = 10; x <= 100; ++x) pts.push_back({double(x), 0.1 * std::log(x) + 0.35 + noise(rng)});
    const RegressionFit f = fit_log_regression(pts);
    if (std::abs(f.a - 0.1) > kSlopeTol || std::abs(f.b - 0.35) > kInterceptTol) ++misses;
  }
  const DomainFits d = fit_sharing_sweep(kReferenceSharingSweep, true);
  const bool finite = std::isfinite(d.percent.a) && std::isfinite(d.fraction.b);
  o.pass = misses == 0 && finite;
  o.detail = "planted recovery misses " + std::to_string(misses) + "/100; reference robust column: percent a=" +
             fmt("%.4f", d.percent.a) + " b=" + fmt("%.4f", d.percent.b) + " R2=" + fmt("%.4f", d.percent.r_squared) +
             ", fraction a=" + fmt("%.4f", d.fraction.a) + " b=" + fmt("%.4f", d.fraction.b) +
             " R2=" + fmt("%.4f", d.fraction.r_squared) + " vs reference a=" + fmt("%.4f", kReferenceRobustCurve.a) +
             " b=" + fmt("%.4f", kReferenceRobustCurve.b) + " R2=" + fmt("%.4f", kReferenceRobustCurve.r_squared) +
             " (compared, not asserted)";
  return o;
}

Outcome cifar() {
  std::vector<std::uint8_t> bytes;
  Rng rng(5);
  for (std::uint8_t label : {3, 7}) {
    bytes.push_back(label);
    for (std::size_t p = 0; p + 1 < kCifarRecordBytes; ++p) bytes.push_back(static_cast<std::uint8_t>(rng() & 0xff));
  }
  const bool round_trip = encode_cifar10(parse_cifar10(bytes)) == bytes;
  auto bad = bytes;
  bad[kCifarRecordBytes] = 10;
  std::uint64_t offset = 0;
  bool rejected = false;
  try {
    parse_cifar10(bad);
  } catch (const ParseError& e) {
    rejected = true;
    offset = e.offset();
  }
  const bool ok = round_trip && rejected && offset == kCifarRecordBytes;
  return {ok, std::string("2-record round trip ") + (round_trip ? "bit-exact" : "differs") +
                  ", label 10 in record 2 " + (rejected ? "rejected at offset " + std::to_string(offset) : "accepted")};
}

Outcome determinism() {
  auto tiny = parse_config(nlohmann::json::parse(R"({
    "data": {"num_classes": 4, "image_size": 6, "train_per_class": 20, "test_per_class": 10,
             "crop_padding": 1, "hflip_prob": 0.5},
    "nn": {"model": "mini_resnet", "width": 3, "activation": "rrelu", "lr": 0.05, "epochs": 2,
           "batch_size": 16},
    "attack": {"pgd_iters": 3, "cw_iters": 5},
    "partition": {"strategy": "dirichlet", "shared_per_class": 4, "sweep": [0.0, 0.5, 1.0]},
    "fed": {"K": 3, "R": 2, "E": 1, "batch_size": 16},
    "eval": {"attacks": ["fgsm", "pgd", "deepfool", "cw", "gaussian"]}
  })"));
  Outcome o;
  int compared = 0;
  for (auto cmd : {Command::train_central, Command::train_fed, Command::attack_eval,
                   Command::partition_inspect, Command::fit_regression}) {
    ExperimentConfig serial = tiny, parallel = tiny;
    parallel.eval.threads = 4;
    parallel.fed.parallel = true;
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    run_experiment(cmd, serial, 99, a);
    run_experiment(cmd, serial, 99, b);
    run_experiment(cmd, parallel, 99, c);
    for (const auto& entry : fs::directory_iterator(a)) {
      const std::string name = entry.path().filename().string();
      if (name == "timing.json") continue;
      for (const fs::path& other : {b, c}) {
        if (name == "config.json" && other == c) continue;  // records the thread settings
        const bool same = name == "rounds.jsonl"
                              ? strip_wall_time(entry.path()) == strip_wall_time(other / name)
                              : slurp(entry.path()) == slurp(other / name);
        ++compared;
        if (!same) {
          o.pass = false;
          o.detail += name_of(cmd) + "/" + name + " differs; ";
        }
      }
    }
    for (const auto& p : {a, b, c}) fs::remove_all(p);
  }
  o.detail += std::to_string(compared) + " output files compared across replay and serial/parallel runs";
  return o;
}

}  // namespace

int main() {
  criterion(1, "gradient correctness", 120, gradients);
  criterion(2, "attack invariants", 120, pgd_invariants);
  criterion(3, "linear-model attack oracles", 120, linear_oracles);
  criterion(4, "soft labels", 0, soft_label_values);
  criterion(5, "learning-rate schedule", 0, schedule);
  criterion(6, "partition properties", 60, partitions);
  criterion(7, "FedAvg algebra", 0, fedavg_algebra);
  criterion(8, "adversarial training benefit", 600, at_benefit);
  criterion(9, "data sharing benefit", 1200, share_benefit);
  criterion(10, "regression fit", 0, regression);
  criterion(11, "CIFAR-10 parser", 0, cifar);
  criterion(12, "determinism", 0, determinism);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
