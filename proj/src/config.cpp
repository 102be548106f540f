#include "advfl/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace advfl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out = "invalid config:";
  for (const auto& p : v) out += "\n  " + p;
  return out;
}

// Reads typed keys from one section, recording problems instead of
// throwing, and remembers which keys were consumed.
class Section {
 public:
  Section(const json& doc, std::string name, std::vector<std::string>& problems)
      : name_(std::move(name)), problems_(problems) {
    if (!doc.contains(name_)) return;
    const json& s = doc.at(name_);
    if (!s.is_object()) {
      problems_.push_back(name_ + ": expected an object");
      return;
    }
    obj_ = &s;
  }

  // First name is canonical, the rest are aliases. Returns true if found.
  template <typename T>
  bool get(std::initializer_list<const char*> names, T& out) {
    if (!obj_) return false;
    const json* found = nullptr;
    std::string found_name;
    for (const char* n : names) {
      used_.insert(n);
      if (!obj_->contains(n)) continue;
      if (found) {
        problem(n, "given together with '" + found_name + "'");
        return false;
      }
      found = &obj_->at(n);
      found_name = n;
    }
    if (!found) return false;
    try {
      convert(*found, out);
    } catch (const std::exception& e) {
      problem(found_name, e.what());
      return false;
    }
    return true;
  }

  void check(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) problem(key, msg);
  }
  void problem(const std::string& key, const std::string& msg) {
    problems_.push_back(name_ + "." + key + ": " + msg);
  }

  void finish() {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items())
      if (!used_.count(k)) problems_.push_back(name_ + "." + k + ": unknown key");
  }

 private:
  static void convert(const json& j, double& out) {
    if (!j.is_number()) throw std::invalid_argument("expected a number");
    out = j.get<double>();
  }
  static void convert(const json& j, bool& out) {
    if (!j.is_boolean()) throw std::invalid_argument("expected true or false");
    out = j.get<bool>();
  }
  static void convert(const json& j, std::string& out) {
    if (!j.is_string()) throw std::invalid_argument("expected a string");
    out = j.get<std::string>();
  }
  template <typename T>
    requires std::is_integral_v<T>
  static void convert(const json& j, T& out) {
    if (j.is_number_integer()) {
      if (j.is_number_unsigned()) {
        const auto v = j.get<std::uint64_t>();
        if (v > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
          throw std::invalid_argument("integer out of range");
        out = static_cast<T>(v);
        return;
      }
      const auto v = j.get<std::int64_t>();
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) throw std::invalid_argument("expected a non-negative integer");
      } else {
        if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
          throw std::invalid_argument("integer out of range");
      }
      out = static_cast<T>(v);
      return;
    }
    if (j.is_number_float()) {
      const double d = j.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9.0e15) {
        json as_int = static_cast<std::int64_t>(d);
        convert(as_int, out);
        return;
      }
    }
    throw std::invalid_argument("expected an integer");
  }
  // null leaves the optional empty, matching what to_json writes.
  template <typename T>
  static void convert(const json& j, std::optional<T>& out) {
    if (j.is_null()) {
      out.reset();
      return;
    }
    T v{};
    convert(j, v);
    out = v;
  }
  template <typename T>
  static void convert(const json& j, std::vector<T>& out) {
    if (!j.is_array()) throw std::invalid_argument("expected an array");
    std::vector<T> tmp;
    for (const auto& e : j) {
      T v{};
      convert(e, v);
      tmp.push_back(v);
    }
    out = std::move(tmp);
  }

  std::string name_;
  std::vector<std::string>& problems_;
  const json* obj_ = nullptr;
  std::set<std::string> used_;
};

template <typename F>
void parse_enum(Section& s, std::initializer_list<const char*> names, F parse) {
  std::string text;
  if (!s.get(names, text)) return;
  try {
    parse(text);
  } catch (const std::exception& e) {
    s.problem(*names.begin(), e.what());
  }
}

void parse_data(const json& doc, DataConfig& d, std::vector<std::string>& problems) {
  Section s(doc, "data", problems);
  parse_enum(s, {"source"}, [&](const std::string& t) {
    if (t == "synthetic")
      d.source = DataSource::synthetic;
    else if (t == "cifar10")
      d.source = DataSource::cifar10;
    else
      throw std::invalid_argument("unknown source '" + t + "' (expected synthetic or cifar10)");
  });
  s.get({"cifar_dir"}, d.cifar_dir);
  s.get({"num_classes"}, d.synthetic.num_classes);
  s.get({"image_size"}, d.synthetic.image_size);
  s.get({"blob_amplitude"}, d.synthetic.blob_amplitude);
  s.get({"blob_sigma"}, d.synthetic.blob_sigma);
  s.get({"jitter"}, d.synthetic.jitter);
  s.get({"background_shift"}, d.synthetic.background_shift);
  s.get({"noise_sigma"}, d.synthetic.noise_sigma);
  s.get({"synthetic_seed"}, d.synthetic.seed);
  s.get({"train_per_class"}, d.train_per_class);
  s.get({"test_per_class"}, d.test_per_class);
  s.get({"crop_padding"}, d.crop_padding);
  s.get({"hflip_prob"}, d.hflip_prob);
  s.get({"include_pgd"}, d.include_pgd);
  s.get({"include_gaussian"}, d.include_gaussian);

  s.check(d.source != DataSource::cifar10 || !d.cifar_dir.empty(), "cifar_dir",
          "required when source is cifar10");
  s.check(d.synthetic.num_classes >= 2, "num_classes", "must be >= 2");
  s.check(d.synthetic.image_size >= 3, "image_size", "must be >= 3");
  s.check(d.synthetic.blob_sigma > 0.0, "blob_sigma", "must be > 0");
  s.check(d.synthetic.jitter >= 0.0, "jitter", "must be >= 0");
  s.check(d.synthetic.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  s.check(d.train_per_class >= 1, "train_per_class", "must be >= 1");
  s.check(d.test_per_class >= 1, "test_per_class", "must be >= 1");
  s.check(d.crop_padding >= 0, "crop_padding", "must be >= 0");
  s.check(d.hflip_prob >= 0.0 && d.hflip_prob <= 1.0, "hflip_prob", "must be in [0,1]");
  s.finish();
}

void parse_nn(const json& doc, NnConfig& n, std::vector<std::string>& problems) {
  Section s(doc, "nn", problems);
  parse_enum(s, {"model"}, [&](const std::string& t) {
    if (t == "mini_resnet")
      n.model = ModelKind::mini_resnet;
    else if (t == "mlp")
      n.model = ModelKind::mlp;
    else
      throw std::invalid_argument("unknown model '" + t + "' (expected mini_resnet or mlp)");
  });
  s.get({"depth"}, n.depth);
  s.get({"width"}, n.width);
  s.get({"hidden"}, n.hidden);
  s.get({"batchnorm"}, n.batchnorm);
  parse_enum(s, {"activation"},
             [&](const std::string& t) { n.activation.kind = parse_activation(t); });
  s.get({"rrelu_lower"}, n.activation.rrelu_lower);
  s.get({"rrelu_upper"}, n.activation.rrelu_upper);
  s.get({"celu_alpha"}, n.activation.celu_alpha);
  s.get({"hardtanh_min"}, n.activation.hardtanh_min);
  s.get({"hardtanh_max"}, n.activation.hardtanh_max);
  s.get({"softplus_beta"}, n.activation.softplus_beta);
  s.get({"lr"}, n.sgd.lr);
  s.get({"momentum"}, n.sgd.momentum);
  s.get({"weight_decay"}, n.sgd.weight_decay);
  parse_enum(s, {"schedule"}, [&](const std::string& t) { n.sgd.schedule = parse_schedule(t); });
  s.get({"epochs"}, n.epochs);
  s.get({"batch_size"}, n.batch_size);
  s.get({"alpha_sl"}, n.alpha_sl);
  s.get({"regenerate_per_epoch"}, n.regenerate_per_epoch);
  s.get({"init_seed"}, n.init_seed);

  s.check(n.depth >= 1, "depth", "must be >= 1");
  s.check(n.width >= 1, "width", "must be >= 1");
  for (Index h : n.hidden) s.check(h >= 1, "hidden", "layer widths must be >= 1");
  try {
    n.activation.validate();
  } catch (const std::exception& e) {
    s.problem("activation", e.what());
  }
  s.check(n.sgd.lr > 0.0, "lr", "must be > 0");
  s.check(n.sgd.momentum >= 0.0 && n.sgd.momentum < 1.0, "momentum", "must be in [0,1)");
  s.check(n.sgd.weight_decay >= 0.0, "weight_decay", "must be >= 0");
  s.check(n.epochs >= 0, "epochs", "must be >= 0");
  s.check(n.batch_size >= 1, "batch_size", "must be >= 1");
  s.check(n.alpha_sl >= 0.0 && n.alpha_sl <= 1.0, "alpha_sl", "must be in [0,1]");
  s.finish();
}

void parse_attack(const json& doc, AttackConfig& a, std::vector<std::string>& problems) {
  Section s(doc, "attack", problems);
  s.get({"epsilon", "eps"}, a.epsilon);
  s.get({"step_alpha", "alpha"}, a.step_alpha);
  s.get({"pgd_iters", "iters"}, a.pgd_iters);
  s.get({"pgd_random_init"}, a.pgd_random_init);
  s.get({"df_overshoot"}, a.df_overshoot);
  s.get({"df_max_iters"}, a.df_max_iters);
  s.get({"cw_kappa", "kappa"}, a.cw_kappa);
  s.get({"cw_lr"}, a.cw_lr);
  s.get({"cw_iters"}, a.cw_iters);
  s.get({"cw_c_min", "c_min"}, a.cw_c_min);
  s.get({"cw_c_max", "c_max"}, a.cw_c_max);
  s.get({"cw_c_steps"}, a.cw_c_steps);
  s.get({"noise_mu", "mu"}, a.noise_mu);
  s.get({"noise_sigma", "sigma"}, a.noise_sigma);

  s.check(a.epsilon > 0.0, "epsilon", "must be > 0");
  s.check(a.step_alpha > 0.0, "step_alpha", "must be > 0");
  s.check(a.pgd_iters >= 1, "pgd_iters", "must be >= 1");
  s.check(a.df_overshoot >= 0.0, "df_overshoot", "must be >= 0");
  s.check(a.df_max_iters >= 1, "df_max_iters", "must be >= 1");
  s.check(a.cw_kappa >= 0.0, "cw_kappa", "must be >= 0");
  s.check(a.cw_lr > 0.0, "cw_lr", "must be > 0");
  s.check(a.cw_iters >= 1, "cw_iters", "must be >= 1");
  s.check(a.cw_c_steps >= 1, "cw_c_steps", "must be >= 1");
  s.check(a.cw_c_min > 0.0, "cw_c_min", "must be > 0");
  s.check(a.cw_c_min < a.cw_c_max, "cw_c_max", "must be greater than cw_c_min");
  s.check(a.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  s.finish();
}

void parse_partition(const json& doc, PartitionSection& p, std::vector<std::string>& problems) {
  Section s(doc, "partition", problems);
  parse_enum(s, {"strategy"}, [&](const std::string& t) { p.strategy = parse_strategy(t); });
  s.get({"shared_per_class"}, p.shared_per_class);
  s.get({"alpha_share"}, p.alpha_share);
  s.get({"beta_dirichlet", "beta"}, p.beta_dirichlet);
  s.get({"sweep"}, p.sweep);

  s.check(p.shared_per_class >= 0, "shared_per_class", "must be >= 0");
  s.check(p.alpha_share >= 0.0 && p.alpha_share <= 1.0, "alpha_share", "must be in [0,1]");
  s.check(p.beta_dirichlet > 0.0, "beta_dirichlet", "must be > 0");
  for (double a : p.sweep) s.check(a >= 0.0 && a <= 1.0, "sweep", "values must be in [0,1]");
  bool shares = p.alpha_share > 0.0;
  for (double a : p.sweep) shares = shares || a > 0.0;
  s.check(!shares || p.shared_per_class > 0, "shared_per_class",
          "must be > 0 when data sharing is requested");
  s.finish();
}

void parse_fed(const json& doc, FedConfig& f, std::vector<std::string>& problems) {
  Section s(doc, "fed", problems);
  s.get({"K", "clients"}, f.clients);
  s.get({"R", "rounds"}, f.rounds);
  s.get({"E", "local_epochs"}, f.local_epochs);
  s.get({"batch_size"}, f.batch_size);
  s.get({"parallel"}, f.parallel);
  s.get({"eval_every"}, f.eval_every);
  s.get({"regenerate_per_epoch"}, f.regenerate_per_epoch);

  s.check(f.clients >= 1, "K", "must be >= 1");
  s.check(f.rounds >= 1, "R", "must be >= 1");
  s.check(f.local_epochs >= 1, "E", "must be >= 1");
  s.check(f.batch_size >= 1, "batch_size", "must be >= 1");
  s.check(f.eval_every >= 1, "eval_every", "must be >= 1");
  s.finish();
}

void parse_eval(const json& doc, EvalConfig& e, std::string& model,
                std::vector<std::string>& problems) {
  Section s(doc, "eval", problems);
  std::vector<std::string> names;
  if (s.get({"attacks"}, names)) {
    e.attacks.clear();
    for (const auto& n : names) {
      try {
        const AttackKind k = advfl::parse_attack(n);
        if (k == AttackKind::none)
          s.problem("attacks", "'none' is not an attack");
        else
          e.attacks.push_back(k);
      } catch (const std::exception& ex) {
        s.problem("attacks", ex.what());
      }
    }
  }
  s.get({"test_noise_sigma"}, e.test_noise_sigma);
  s.get({"test_noise_mu"}, e.test_noise_mu);
  s.get({"noise_on_clean"}, e.noise_on_clean);
  s.get({"subsample"}, e.subsample);
  s.get({"threads"}, e.threads);
  s.get({"model"}, model);

  s.check(e.test_noise_sigma >= 0.0, "test_noise_sigma", "must be >= 0");
  s.check(e.subsample >= 0, "subsample", "must be >= 0");
  s.check(e.threads >= 1, "threads", "must be >= 1");
  s.finish();
}

void parse_regression(const json& doc, RegressionSection& r, std::vector<std::string>& problems) {
  Section s(doc, "regression", problems);
  s.get({"input"}, r.input);
  s.get({"column"}, r.column);
  s.check(r.column == "robust" || r.column == "natural", "column", "must be robust or natural");
  s.finish();
}

const std::set<std::string> kSections{"data", "nn", "attack", "partition", "fed", "eval", "regression"};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError({"config: top level must be an object"});
  std::vector<std::string> problems;
  for (const auto& [k, v] : doc.items())
    if (!kSections.count(k)) problems.push_back(k + ": unknown section");

  ExperimentConfig cfg;
  parse_data(doc, cfg.data, problems);
  parse_nn(doc, cfg.nn, problems);
  parse_attack(doc, cfg.attack, problems);
  parse_partition(doc, cfg.partition, problems);
  parse_fed(doc, cfg.fed, problems);
  parse_eval(doc, cfg.eval, cfg.eval_model, problems);
  parse_regression(doc, cfg.regression, problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  cfg.eval.attack = cfg.attack;
  return cfg;
}

json apply_overrides(json doc, const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      problems.push_back("override '" + o + "': expected section.key=value");
      continue;
    }
    const std::string section = o.substr(0, dot);
    const std::string key = o.substr(dot + 1, eq - dot - 1);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    doc[section][key] = std::move(value);
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError({"config: " + path.string() + " is not valid JSON"});
  return parse_config(apply_overrides(std::move(doc), overrides));
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  const auto& d = cfg.data;
  j["data"] = {
      {"source", d.source == DataSource::synthetic ? "synthetic" : "cifar10"},
      {"cifar_dir", d.cifar_dir},
      {"num_classes", d.synthetic.num_classes},
      {"image_size", d.synthetic.image_size},
      {"blob_amplitude", d.synthetic.blob_amplitude},
      {"blob_sigma", d.synthetic.blob_sigma},
      {"jitter", d.synthetic.jitter},
      {"background_shift", d.synthetic.background_shift},
      {"noise_sigma", d.synthetic.noise_sigma},
      {"synthetic_seed", d.synthetic.seed},
      {"train_per_class", d.train_per_class},
      {"test_per_class", d.test_per_class},
      {"crop_padding", d.crop_padding},
      {"hflip_prob", d.hflip_prob},
      {"include_pgd", d.include_pgd},
      {"include_gaussian", d.include_gaussian},
  };
  const auto& n = cfg.nn;
  j["nn"] = {
      {"model", n.model == ModelKind::mini_resnet ? "mini_resnet" : "mlp"},
      {"depth", n.depth},
      {"width", n.width},
      {"hidden", n.hidden},
      {"batchnorm", n.batchnorm},
      {"activation", std::string(name_of(n.activation.kind))},
      {"rrelu_lower", n.activation.rrelu_lower},
      {"rrelu_upper", n.activation.rrelu_upper},
      {"celu_alpha", n.activation.celu_alpha},
      {"hardtanh_min", n.activation.hardtanh_min},
      {"hardtanh_max", n.activation.hardtanh_max},
      {"softplus_beta", n.activation.softplus_beta},
      {"lr", n.sgd.lr},
      {"momentum", n.sgd.momentum},
      {"weight_decay", n.sgd.weight_decay},
      {"schedule", n.sgd.schedule == Schedule::fixed ? "fixed" : "piecewise"},
      {"epochs", n.epochs},
      {"batch_size", n.batch_size},
      {"alpha_sl", n.alpha_sl},
      {"regenerate_per_epoch", n.regenerate_per_epoch},
      {"init_seed", n.init_seed ? ordered_json(*n.init_seed) : ordered_json(nullptr)},
  };
  const auto& a = cfg.attack;
  j["attack"] = {
      {"epsilon", a.epsilon},           {"step_alpha", a.step_alpha},
      {"pgd_iters", a.pgd_iters},       {"pgd_random_init", a.pgd_random_init},
      {"df_overshoot", a.df_overshoot}, {"df_max_iters", a.df_max_iters},
      {"cw_kappa", a.cw_kappa},         {"cw_lr", a.cw_lr},
      {"cw_iters", a.cw_iters},         {"cw_c_min", a.cw_c_min},
      {"cw_c_max", a.cw_c_max},         {"cw_c_steps", a.cw_c_steps},
      {"noise_mu", a.noise_mu},         {"noise_sigma", a.noise_sigma},
  };
  const auto& p = cfg.partition;
  j["partition"] = {
      {"strategy", name_of(p.strategy)},
      {"shared_per_class", p.shared_per_class},
      {"alpha_share", p.alpha_share},
      {"beta_dirichlet", p.beta_dirichlet},
      {"sweep", p.sweep},
  };
  const auto& f = cfg.fed;
  j["fed"] = {
      {"K", f.clients},
      {"R", f.rounds},
      {"E", f.local_epochs},
      {"batch_size", f.batch_size},
      {"parallel", f.parallel},
      {"eval_every", f.eval_every},
      {"regenerate_per_epoch", f.regenerate_per_epoch},
  };
  const auto& e = cfg.eval;
  std::vector<std::string> attacks;
  for (auto k : e.attacks) attacks.push_back(name_of(k));
  j["eval"] = {
      {"attacks", attacks},
      {"test_noise_sigma", e.test_noise_sigma},
      {"test_noise_mu", e.test_noise_mu},
      {"noise_on_clean", e.noise_on_clean},
      {"subsample", e.subsample},
      {"threads", e.threads},
      {"model", cfg.eval_model},
  };
  j["regression"] = {{"input", cfg.regression.input}, {"column", cfg.regression.column}};
  return j;
}

}  // namespace advfl
