#include "advfl/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "advfl/regression.hpp"
#include "advfl/serialize.hpp"

namespace advfl {

using nlohmann::ordered_json;

namespace {

// Every report carries all of these keys; attacks that were not run are null.
const std::vector<AttackKind> kReportAttacks{AttackKind::fgsm,     AttackKind::pgd,
                                             AttackKind::bim,      AttackKind::deepfool,
                                             AttackKind::cw,       AttackKind::gaussian};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string number(double v) { return ordered_json(v).dump(); }

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

struct Evaluation {
  std::optional<double> natural;
  std::map<std::string, std::optional<double>> robust;
  std::map<std::string, std::optional<Index>> failures;
  Index evaluated = 0;
};

Evaluation evaluate(const Network& net, const LabeledBatch& test, const EvalConfig& cfg) {
  Evaluation ev;
  for (auto k : kReportAttacks) {
    ev.robust[name_of(k)] = std::nullopt;
    ev.failures[name_of(k)] = std::nullopt;
  }
  ev.natural = eval_natural(net, test, cfg);
  for (auto k : cfg.attacks) {
    const RobustResult r = eval_robust(net, test, k, cfg);
    ev.robust[name_of(k)] = r.accuracy;
    ev.failures[name_of(k)] = r.attack_failures;
    ev.evaluated = r.evaluated;
  }
  if (ev.evaluated == 0)
    ev.evaluated = cfg.subsample > 0 ? std::min(cfg.subsample, test.size()) : test.size();
  return ev;
}

ordered_json robust_json(const std::map<std::string, std::optional<double>>& m) {
  ordered_json j = ordered_json::object();
  for (auto k : kReportAttacks) j[name_of(k)] = opt(m.at(name_of(k)));
  return j;
}

ordered_json failures_json(const std::map<std::string, std::optional<Index>>& m) {
  ordered_json j = ordered_json::object();
  for (auto k : kReportAttacks) {
    const auto& v = m.at(name_of(k));
    j[name_of(k)] = v ? ordered_json(*v) : ordered_json(nullptr);
  }
  return j;
}

EvalConfig eval_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  EvalConfig e = cfg.eval;
  e.attack = cfg.attack;
  e.seed = eval_seed_for(seed);
  return e;
}

std::string primary_attack(const EvalConfig& e) {
  return e.attacks.empty() ? std::string("none") : name_of(e.attacks.front());
}

LabeledBatch cap_per_class(const LabeledBatch& b, int per_class) {
  std::vector<int> seen(static_cast<std::size_t>(b.num_classes), 0);
  IndexList keep;
  for (Index i = 0; i < b.size(); ++i) {
    int& s = seen[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)])];
    if (s < per_class) {
      keep.push_back(i);
      ++s;
    }
  }
  return b.subset(keep);
}

// Training: the whole training set as one client.
struct CentralRun {
  Network model;
  double final_loss = 0.0;
  ordered_json epochs = ordered_json::array();
  std::string curve_csv;
};

CentralRun train_central(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed,
                         bool evaluate_epochs) {
  const EvalConfig ecfg = eval_config(cfg, seed);
  Network init = build_network(cfg.nn, data.train.shape, data.train.num_classes, seed);
  CentralRun run;
  run.model = init;
  if (cfg.nn.epochs == 0) return run;

  LocalTrainConfig local;
  local.epochs = cfg.nn.epochs;
  local.batch_size = cfg.nn.batch_size;
  local.augment = make_augment_plan(cfg, data.train.shape);
  local.sgd = cfg.nn.sgd;
  local.regenerate_per_epoch = cfg.nn.regenerate_per_epoch;
  ClientState all{0, IndexList(static_cast<std::size_t>(data.train.size())), mix_seed(seed, 0)};
  std::iota(all.indices.begin(), all.indices.end(), Index{0});

  std::ostringstream csv;
  csv << "epoch,loss,natural_acc";
  for (auto k : ecfg.attacks) csv << "," << name_of(k) << "_acc";
  csv << "\n";
  auto observer = [&](int epoch, const Network& net, double loss) {
    ordered_json row{{"epoch", epoch + 1}, {"loss", loss}};
    csv << epoch + 1 << "," << number(loss);
    if (evaluate_epochs) {
      const Evaluation ev = evaluate(net, data.test, ecfg);
      row["natural_acc"] = opt(ev.natural);
      row["robust_acc"] = robust_json(ev.robust);
      csv << "," << fixed4(100.0 * *ev.natural);
      for (auto k : ecfg.attacks) csv << "," << fixed4(100.0 * *ev.robust.at(name_of(k)));
    }
    csv << "\n";
    run.epochs.push_back(row);
  };
  LocalResult res = local_adv_train(init, data.train, all, local, 0, 0, observer);
  run.model = std::move(res.model);
  run.final_loss = res.mean_loss;
  run.curve_csv = csv.str();
  return run;
}

void cmd_train_central(const ExperimentConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out, ordered_json& timing) {
  if (cfg.nn.epochs < 1) throw ConfigError({"nn.epochs: must be >= 1 for train-central"});
  const auto t0 = Clock::now();
  const Datasets data = load_datasets(cfg.data, seed);
  CentralRun run = train_central(cfg, data, seed, true);
  const Evaluation ev = evaluate(run.model, data.test, eval_config(cfg, seed));

  ordered_json r;
  r["command"] = "train-central";
  r["seed"] = seed;
  r["train_size"] = data.train.size();
  r["test_evaluated"] = ev.evaluated;
  r["param_count"] = run.model.param_count();
  r["final_loss"] = run.final_loss;
  r["natural_acc"] = opt(ev.natural);
  r["robust_acc"] = robust_json(ev.robust);
  r["attack_failures"] = failures_json(ev.failures);
  r["epochs"] = run.epochs;
  write_json(out / "report.json", r);
  write_text(out / "curve.csv", run.curve_csv);
  save_model(out / "model.bin", run.model);
  timing["total_s"] = seconds_since(t0);
}

std::string percent_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", static_cast<int>(std::lround(alpha * 100.0)));
  return buf;
}

void cmd_train_fed(const ExperimentConfig& cfg, std::uint64_t seed,
                   const std::filesystem::path& out, ordered_json& timing) {
  const auto t0 = Clock::now();
  const Datasets data = load_datasets(cfg.data, seed);
  const EvalConfig ecfg = eval_config(cfg, seed);
  const std::string primary = primary_attack(ecfg);
  const bool sweep = !cfg.partition.sweep.empty();
  const std::vector<double> alphas = sweep ? cfg.partition.sweep
                                           : std::vector<double>{cfg.partition.alpha_share};
  const Network initial = build_network(cfg.nn, data.train.shape, data.train.num_classes, seed);
  const AugmentPlan augment = make_augment_plan(cfg, data.train.shape);
  FedConfig fed = cfg.fed;
  fed.seed = seed;

  std::ostringstream jsonl, csv;
  csv << "sharing_percent,natural_acc,robust_acc\n";
  ordered_json runs = ordered_json::array();
  ordered_json run_times = ordered_json::array();

  for (double alpha : alphas) {
    const auto ts = Clock::now();
    PartitionConfig pc{cfg.partition.strategy, fed.clients, cfg.partition.shared_per_class, alpha,
                       cfg.partition.beta_dirichlet};
    const PartitionPlan plan = make_partition_plan(data.train.labels,
                                                   static_cast<int>(data.train.num_classes), pc, seed);
    // The final round is always evaluated, so `ev` ends up describing the
    // returned global model.
    Evaluation ev;
    RoundEvaluator evaluator = [&](const Network& net, RoundReport& rep) {
      ev = evaluate(net, data.test, ecfg);
      rep.natural_acc = ev.natural;
      rep.robust_acc = ev.robust;
    };
    FedResult res = run_rounds(fed, plan, data.train, initial, augment, cfg.nn.sgd, evaluator);

    for (const auto& rep : res.rounds) {
      std::map<std::string, std::optional<double>> robust = rep.robust_acc;
      for (auto k : kReportAttacks) robust.emplace(name_of(k), std::nullopt);
      ordered_json line;
      line["alpha_share"] = alpha;
      line["round"] = rep.round;
      line["natural"] = opt(rep.natural_acc);
      line["robust"] = robust_json(robust);
      line["mean_client_loss"] = rep.mean_client_loss;
      line["wall_time"] = rep.wall_time_s;
      jsonl << line.dump() << "\n";
    }

    std::string robust_cell;
    if (auto it = ev.robust.find(primary); it != ev.robust.end() && it->second)
      robust_cell = fixed4(100.0 * *it->second);
    csv << number(std::round(alpha * 1e6) / 1e4) << "," << fixed4(100.0 * *ev.natural) << ","
        << robust_cell << "\n";

    ordered_json r;
    r["alpha_share"] = alpha;
    r["sharing_percent"] = std::round(alpha * 1e6) / 1e4;
    r["shared_sample_size"] = plan.shared_sample.size();
    r["client_sizes"] = res.client_sizes;
    r["final_mean_client_loss"] = res.rounds.back().mean_client_loss;
    r["natural_acc"] = opt(ev.natural);
    r["robust_acc"] = robust_json(ev.robust);
    r["attack_failures"] = failures_json(ev.failures);
    runs.push_back(r);

    save_model(out / (sweep ? "model_share_" + percent_label(alpha) + ".bin" : std::string("model.bin")),
               res.global);
    run_times.push_back({{"alpha_share", alpha}, {"seconds", seconds_since(ts)}});
  }

  ordered_json report;
  report["command"] = "train-fed";
  report["seed"] = seed;
  report["strategy"] = name_of(cfg.partition.strategy);
  report["K"] = fed.clients;
  report["R"] = fed.rounds;
  report["E"] = fed.local_epochs;
  report["primary_attack"] = primary;
  report["test_evaluated"] =
      ecfg.subsample > 0 ? std::min(ecfg.subsample, data.test.size()) : data.test.size();
  report["runs"] = runs;
  write_json(out / "report.json", report);
  write_text(out / "rounds.jsonl", jsonl.str());
  write_text(out / "sweep.csv", csv.str());
  timing["runs"] = run_times;
  timing["total_s"] = seconds_since(t0);
}

void cmd_attack_eval(const ExperimentConfig& cfg, std::uint64_t seed,
                     const std::filesystem::path& out, ordered_json& timing) {
  const auto t0 = Clock::now();
  const Datasets data = load_datasets(cfg.data, seed);
  Network net;
  std::string source;
  if (!cfg.eval_model.empty()) {
    net = load_model(cfg.eval_model);
    if (!(net.input_shape() == data.test.shape) || net.num_classes() != data.test.num_classes)
      throw std::runtime_error(cfg.eval_model + ": model input " + to_string(net.input_shape()) +
                               " / " + std::to_string(net.num_classes()) +
                               " classes does not match the test data " +
                               to_string(data.test.shape) + " / " +
                               std::to_string(data.test.num_classes) + " classes");
    source = "file";
  } else {
    net = train_central(cfg, data, seed, false).model;
    source = cfg.nn.epochs == 0 ? "untrained" : "trained";
  }
  const EvalConfig ecfg = eval_config(cfg, seed);
  const Evaluation ev = evaluate(net, data.test, ecfg);

  ordered_json r;
  r["command"] = "attack-eval";
  r["seed"] = seed;
  r["model_source"] = source;
  r["test_evaluated"] = ev.evaluated;
  r["natural_acc"] = opt(ev.natural);
  r["robust_acc"] = robust_json(ev.robust);
  r["attack_failures"] = failures_json(ev.failures);
  write_json(out / "report.json", r);

  std::ostringstream csv;
  csv << "attack,robust_acc,attack_failures\n";
  for (auto k : ecfg.attacks)
    csv << name_of(k) << "," << fixed4(100.0 * *ev.robust.at(name_of(k))) << ","
        << *ev.failures.at(name_of(k)) << "\n";
  write_text(out / "attacks.csv", csv.str());
  if (source != "file") save_model(out / "model.bin", net);
  timing["total_s"] = seconds_since(t0);
}

void cmd_partition_inspect(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& out, ordered_json& timing) {
  const auto t0 = Clock::now();
  const Datasets data = load_datasets(cfg.data, seed);
  const int n_classes = static_cast<int>(data.train.num_classes);
  PartitionConfig pc{cfg.partition.strategy, cfg.fed.clients, cfg.partition.shared_per_class,
                     cfg.partition.alpha_share, cfg.partition.beta_dirichlet};
  const PartitionPlan plan = make_partition_plan(data.train.labels, n_classes, pc, seed);
  plan.validate(data.train.labels);
  const auto local = class_histograms(plan, data.train.labels, n_classes, false);
  const auto with_shared = class_histograms(plan, data.train.labels, n_classes, true);

  ordered_json clients = ordered_json::array();
  std::ostringstream csv;
  csv << "client,total";
  for (int c = 0; c < n_classes; ++c) csv << ",class_" << c;
  csv << "\n";
  for (std::size_t k = 0; k < plan.client_indices.size(); ++k) {
    const Index total = std::accumulate(with_shared[k].begin(), with_shared[k].end(), Index{0});
    clients.push_back({{"id", k},
                       {"local_size", plan.client_indices[k].size()},
                       {"total_size", total},
                       {"histogram", local[k]},
                       {"histogram_with_shared", with_shared[k]}});
    csv << k << "," << total;
    for (Index v : with_shared[k]) csv << "," << v;
    csv << "\n";
  }

  ordered_json r;
  r["command"] = "partition-inspect";
  r["strategy"] = name_of(plan.strategy);
  r["seed"] = seed;
  r["K"] = cfg.fed.clients;
  r["num_classes"] = n_classes;
  r["dataset_size"] = data.train.size();
  r["alpha_share"] = plan.alpha_share;
  r["beta_dirichlet"] = plan.strategy == Strategy::dirichlet ? ordered_json(plan.beta)
                                                             : ordered_json(nullptr);
  r["shared_per_class"] = plan.shared_pool.per_class_count();
  r["shared_sample_size"] = plan.shared_sample.size();
  r["unassigned"] = plan.unassigned.size();
  r["clients"] = clients;
  write_json(out / "report.json", r);
  write_text(out / "histograms.csv", csv.str());
  timing["total_s"] = seconds_since(t0);
}

std::vector<SharingSweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("sharing_percent,natural_acc,robust_acc", 0) != 0)
    throw std::runtime_error(path.string() + ": expected header sharing_percent,natural_acc,robust_acc");
  std::vector<SharingSweepRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    SharingSweepRow row{};
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> row.sharing_percent >> c1 >> row.natural_acc >> c2 >> row.robust_acc) || c1 != ',' ||
        c2 != ',')
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    rows.push_back(row);
  }
  return rows;
}

ordered_json fit_json(const RegressionFit& f) {
  return {{"x_domain", f.x_domain}, {"a", f.a},       {"b", f.b},
          {"r_squared", f.r_squared}, {"used", f.used}, {"excluded", f.excluded}};
}

void cmd_fit_regression(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::filesystem::path& out, ordered_json& timing) {
  const auto t0 = Clock::now();
  const bool builtin = cfg.regression.input.empty();
  const std::vector<SharingSweepRow> rows =
      builtin ? std::vector<SharingSweepRow>(kReferenceSharingSweep.begin(), kReferenceSharingSweep.end())
              : read_sweep_csv(cfg.regression.input);
  const bool robust = cfg.regression.column == "robust";
  const DomainFits fits = fit_sharing_sweep(rows, robust);
  const ReferenceCurve pub = robust ? kReferenceRobustCurve : kReferenceNaturalCurve;

  ordered_json points = ordered_json::array();
  std::ostringstream csv;
  csv << "sharing_percent,observed,fit_percent,fit_fraction,reference_percent,reference_fraction\n";
  for (const auto& row : rows) {
    const double y = (robust ? row.robust_acc : row.natural_acc) / 100.0;
    ordered_json p{{"sharing_percent", row.sharing_percent}, {"observed", y}};
    csv << number(row.sharing_percent) << "," << number(y);
    if (row.sharing_percent > 0) {
      const double lp = std::log(row.sharing_percent), lf = std::log(row.sharing_percent / 100.0);
      const double v[4] = {fits.percent.a * lp + fits.percent.b, fits.fraction.a * lf + fits.fraction.b,
                           pub.a * lp + pub.b, pub.a * lf + pub.b};
      p["fit_percent"] = v[0];
      p["fit_fraction"] = v[1];
      p["reference_percent"] = v[2];
      p["reference_fraction"] = v[3];
      for (double x : v) csv << "," << number(x);
    } else {
      for (const char* k : {"fit_percent", "fit_fraction", "reference_percent", "reference_fraction"})
        p[k] = nullptr;
      csv << ",,,,";
    }
    csv << "\n";
    points.push_back(p);
  }

  ordered_json r;
  r["command"] = "fit-regression";
  r["seed"] = seed;
  r["source"] = builtin ? "reference-table" : cfg.regression.input;
  r["column"] = cfg.regression.column;
  r["model"] = "y = a*ln(x) + b, y as a fraction";
  r["fits"] = {{"percent", fit_json(fits.percent)}, {"fraction", fit_json(fits.fraction)}};
  r["reference"] = {{"a", pub.a}, {"b", pub.b}, {"r_squared", pub.r_squared}};
  r["points"] = points;
  write_json(out / "report.json", r);
  write_text(out / "fit.csv", csv.str());
  timing["total_s"] = seconds_since(t0);
}

}  // namespace

Command parse_command(const std::string& name) {
  if (name == "train-central") return Command::train_central;
  if (name == "train-fed") return Command::train_fed;
  if (name == "attack-eval") return Command::attack_eval;
  if (name == "partition-inspect") return Command::partition_inspect;
  if (name == "fit-regression") return Command::fit_regression;
  throw std::invalid_argument("unknown command '" + name + "'");
}

std::string name_of(Command c) {
  switch (c) {
    case Command::train_central: return "train-central";
    case Command::train_fed: return "train-fed";
    case Command::attack_eval: return "attack-eval";
    case Command::partition_inspect: return "partition-inspect";
    case Command::fit_regression: return "fit-regression";
  }
  return "?";
}

std::uint64_t init_seed_for(const NnConfig& cfg, std::uint64_t seed) {
  return cfg.init_seed ? *cfg.init_seed : mix_seed(seed, 0x1417);
}

std::uint64_t eval_seed_for(std::uint64_t seed) { return mix_seed(seed, 0xe7a1); }

Datasets load_datasets(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.source == DataSource::synthetic)
    return {make_synthetic(cfg.synthetic, cfg.train_per_class, mix_seed(seed, 0xda7a1)),
            make_synthetic(cfg.synthetic, cfg.test_per_class, mix_seed(seed, 0xda7a2))};
  auto [train, test] = load_cifar10(cfg.cifar_dir);
  return {cap_per_class(train, cfg.train_per_class), cap_per_class(test, cfg.test_per_class)};
}

Network build_network(const NnConfig& cfg, Shape input, Index num_classes, std::uint64_t seed) {
  if (cfg.model == ModelKind::mlp)
    return build_mlp(input, cfg.hidden, cfg.activation, num_classes, init_seed_for(cfg, seed));
  MiniResNetConfig m;
  m.input = input;
  m.depth = cfg.depth;
  m.width = cfg.width;
  m.activation = cfg.activation;
  m.num_classes = num_classes;
  m.batchnorm = cfg.batchnorm;
  m.init_seed = init_seed_for(cfg, seed);
  return build_mini_resnet(m);
}

AugmentPlan make_augment_plan(const ExperimentConfig& cfg, Shape input) {
  AugmentPlan p;
  p.crop_size = input.height;
  p.crop_padding = cfg.data.crop_padding;
  p.hflip_prob = cfg.data.hflip_prob;
  p.include_pgd = cfg.data.include_pgd;
  p.include_gaussian = cfg.data.include_gaussian;
  p.alpha_sl = cfg.nn.alpha_sl;
  p.attack = cfg.attack;
  return p;
}

void run_experiment(Command command, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "config.json", to_json(cfg));
  ordered_json timing;
  timing["command"] = name_of(command);
  switch (command) {
    case Command::train_central: cmd_train_central(cfg, seed, out_dir, timing); break;
    case Command::train_fed: cmd_train_fed(cfg, seed, out_dir, timing); break;
    case Command::attack_eval: cmd_attack_eval(cfg, seed, out_dir, timing); break;
    case Command::partition_inspect: cmd_partition_inspect(cfg, seed, out_dir, timing); break;
    case Command::fit_regression: cmd_fit_regression(cfg, seed, out_dir, timing); break;
  }
  write_json(out_dir / "timing.json", timing);
}

}  // namespace advfl
