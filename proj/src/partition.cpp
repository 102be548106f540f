#include "advfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace advfl {

namespace {

std::vector<IndexList> group_by_class(std::span<const Index> indices, std::span<const int> labels,
                                      int num_classes) {
  std::vector<IndexList> groups(static_cast<std::size_t>(num_classes));
  for (Index i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= labels.size())
      throw std::out_of_range("partition: index " + std::to_string(i) + " out of range");
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("partition: label " + std::to_string(y) + " out of range");
    groups[static_cast<std::size_t>(y)].push_back(i);
  }
  return groups;
}

void require_clients(int clients) {
  if (clients < 1) throw std::invalid_argument("partition: need at least one client");
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
  if (name == "iid") return Strategy::iid;
  if (name == "one_class") return Strategy::one_class;
  if (name == "two_class") return Strategy::two_class;
  if (name == "dirichlet") return Strategy::dirichlet;
  throw std::invalid_argument("unknown partition strategy '" + name + "'");
}

std::string name_of(Strategy s) {
  switch (s) {
    case Strategy::iid: return "iid";
    case Strategy::one_class: return "one_class";
    case Strategy::two_class: return "two_class";
    case Strategy::dirichlet: return "dirichlet";
  }
  return "?";
}

IndexList SharedPool::all() const {
  IndexList out;
  for (const auto& c : per_class) out.insert(out.end(), c.begin(), c.end());
  return out;
}

PoolSplit make_shared_pool(std::span<const int> labels, int num_classes, Index per_class,
                           Rng& rng) {
  if (per_class < 0) throw std::invalid_argument("shared pool: per_class must be >= 0");
  IndexList all(labels.size());
  std::iota(all.begin(), all.end(), Index{0});
  auto groups = group_by_class(all, labels, num_classes);
  PoolSplit out;
  out.pool.per_class.resize(static_cast<std::size_t>(num_classes));
  std::vector<char> taken(labels.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    auto& g = groups[static_cast<std::size_t>(c)];
    if (static_cast<Index>(g.size()) < per_class)
      throw std::invalid_argument("shared pool: class " + std::to_string(c) + " has only " +
                                  std::to_string(g.size()) + " examples, need " +
                                  std::to_string(per_class));
    std::shuffle(g.begin(), g.end(), rng);
    IndexList chosen(g.begin(), g.begin() + per_class);
    std::sort(chosen.begin(), chosen.end());
    for (Index i : chosen) taken[static_cast<std::size_t>(i)] = 1;
    out.pool.per_class[static_cast<std::size_t>(c)] = std::move(chosen);
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!taken[i]) out.remainder.push_back(static_cast<Index>(i));
  return out;
}

IndexList sample_shared(const SharedPool& pool, double alpha_share, Rng& rng) {
  if (!(alpha_share >= 0.0 && alpha_share <= 1.0))
    throw std::invalid_argument("alpha_share must be in [0,1]");
  IndexList out;
  for (const auto& cls : pool.per_class) {
    // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
    const auto take = static_cast<std::size_t>(
        std::floor(alpha_share * static_cast<double>(cls.size()) + 1e-9));
    IndexList shuffled = cls;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    out.insert(out.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

std::vector<IndexList> partition_iid(std::span<const Index> remainder, std::span<const int> labels,
                                     int clients, Rng& rng) {
  require_clients(clients);
  if (static_cast<std::size_t>(clients) > remainder.size())
    throw std::invalid_argument("iid partition: " + std::to_string(clients) + " clients for " +
                                std::to_string(remainder.size()) + " examples");
  const int num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  auto groups = group_by_class(remainder, labels, num_classes);
  std::vector<IndexList> out(static_cast<std::size_t>(clients));
  std::size_t next = 0;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    for (Index i : g) {
      out[next].push_back(i);
      next = (next + 1) % out.size();
    }
  }
  return out;
}

std::vector<IndexList> partition_one_class(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, Rng& rng) {
  require_clients(clients);
  if (clients > num_classes)
    throw std::invalid_argument("one_class partition: " + std::to_string(clients) +
                                " clients exceed " + std::to_string(num_classes) + " classes");
  auto groups = group_by_class(remainder, labels, num_classes);
  std::vector<int> order(static_cast<std::size_t>(num_classes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<IndexList> out(static_cast<std::size_t>(clients));
  for (int k = 0; k < clients; ++k) {
    out[static_cast<std::size_t>(k)] = groups[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
    std::shuffle(out[static_cast<std::size_t>(k)].begin(), out[static_cast<std::size_t>(k)].end(), rng);
  }
  return out;
}

std::vector<IndexList> partition_two_class(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, Rng& rng) {
  require_clients(clients);
  const int shards_needed = 2 * clients;
  std::vector<int> classes(static_cast<std::size_t>(num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  int per_class = 1;
  if (shards_needed >= num_classes) {
    if (shards_needed % num_classes != 0 || shards_needed > 2 * num_classes)
      throw std::invalid_argument("two_class partition: " + std::to_string(shards_needed) +
                                  " shards cannot be cut evenly from " +
                                  std::to_string(num_classes) + " classes");
    per_class = shards_needed / num_classes;
  } else {
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(static_cast<std::size_t>(shards_needed));
    std::sort(classes.begin(), classes.end());
  }

  auto groups = group_by_class(remainder, labels, num_classes);
  struct Shard {
    int cls;
    IndexList items;
  };
  std::vector<Shard> shards;
  for (int c : classes) {
    auto& g = groups[static_cast<std::size_t>(c)];
    if (static_cast<int>(g.size()) < per_class)
      throw std::invalid_argument("two_class partition: class " + std::to_string(c) +
                                  " has too few examples for " + std::to_string(per_class) +
                                  " shards");
    std::shuffle(g.begin(), g.end(), rng);
    const std::size_t n = g.size();
    for (int s = 0; s < per_class; ++s) {
      const std::size_t lo = n * static_cast<std::size_t>(s) / static_cast<std::size_t>(per_class);
      const std::size_t hi = n * static_cast<std::size_t>(s + 1) / static_cast<std::size_t>(per_class);
      shards.push_back({c, IndexList(g.begin() + static_cast<std::ptrdiff_t>(lo),
                                     g.begin() + static_cast<std::ptrdiff_t>(hi))});
    }
  }
  std::shuffle(shards.begin(), shards.end(), rng);

  // Pair consecutive shards, then repair same-class pairs by swapping the
  // second shard with one from a pair that holds neither class.
  const std::size_t pairs = static_cast<std::size_t>(clients);
  for (std::size_t i = 0; i < pairs; ++i) {
    auto& a = shards[2 * i];
    auto& b = shards[2 * i + 1];
    if (a.cls != b.cls) continue;
    bool fixed = false;
    for (std::size_t j = 0; j < pairs && !fixed; ++j) {
      if (j == i) continue;
      auto& c = shards[2 * j];
      auto& d = shards[2 * j + 1];
      if (c.cls != a.cls && d.cls != a.cls) {
        std::swap(b, d);
        fixed = true;
      }
    }
    if (!fixed) throw std::runtime_error("two_class partition: could not pair distinct classes");
  }

  std::vector<IndexList> out(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    out[k] = shards[2 * k].items;
    out[k].insert(out[k].end(), shards[2 * k + 1].items.begin(), shards[2 * k + 1].items.end());
  }
  return out;
}

std::vector<Index> largest_remainder(std::span<const double> weights, Index total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw std::invalid_argument("largest_remainder: weights must sum to > 0");
  std::vector<Index> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> fractions;
  Index assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<Index>(std::floor(exact));
    assigned += counts[i];
    fractions.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(fractions.begin(), fractions.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned)
    ++counts[fractions[i % fractions.size()].second];
  return counts;
}

std::vector<IndexList> partition_dirichlet(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, double beta, Rng& rng) {
  require_clients(clients);
  if (!(beta > 0.0)) throw std::invalid_argument("dirichlet partition: beta must be > 0");
  auto groups = group_by_class(remainder, labels, num_classes);
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<IndexList> out(static_cast<std::size_t>(clients));
  std::vector<double> share(static_cast<std::size_t>(clients));
  for (auto& g : groups) {
    double sum = 0.0;
    for (double& s : share) sum += (s = gamma(rng));
    if (!(sum > 0.0)) {  // every draw underflowed; give the class to one client
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, share.size() - 1)(rng)] = 1.0;
    }
    const auto counts = largest_remainder(share, static_cast<Index>(g.size()));
    std::shuffle(g.begin(), g.end(), rng);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto n = static_cast<std::size_t>(counts[k]);
      out[k].insert(out[k].end(), g.begin() + static_cast<std::ptrdiff_t>(pos),
                    g.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
    }
  }
  return out;
}

IndexList assemble_client_set(std::span<const Index> local, std::span<const Index> shared) {
  const std::unordered_set<Index> seen(local.begin(), local.end());
  for (Index i : shared)
    if (seen.count(i) != 0)
      throw std::invalid_argument("assemble_client_set: index " + std::to_string(i) +
                                  " is both local and shared");
  IndexList out(local.begin(), local.end());
  out.insert(out.end(), shared.begin(), shared.end());
  return out;
}

IndexList PartitionPlan::client_set(std::size_t k) const {
  return assemble_client_set(client_indices.at(k), shared_sample);
}

void PartitionPlan::validate(std::span<const int> labels) const {
  std::vector<int> owner(labels.size(), -1);
  auto claim = [&](Index i, int who, const char* what) {
    if (i < 0 || static_cast<std::size_t>(i) >= labels.size())
      throw std::invalid_argument(std::string("plan: ") + what + " index out of range");
    if (owner[static_cast<std::size_t>(i)] != -1)
      throw std::invalid_argument("plan: index " + std::to_string(i) + " assigned twice");
    owner[static_cast<std::size_t>(i)] = who;
  };
  for (std::size_t k = 0; k < client_indices.size(); ++k)
    for (Index i : client_indices[k]) claim(i, static_cast<int>(k), "client");
  for (Index i : shared_pool.all()) claim(i, -2, "shared pool");
  for (Index i : unassigned) claim(i, -3, "unassigned");
  for (std::size_t i = 0; i < owner.size(); ++i)
    if (owner[i] == -1) throw std::invalid_argument("plan: index " + std::to_string(i) + " lost");
  const Index per = shared_pool.per_class_count();
  for (const auto& c : shared_pool.per_class)
    if (static_cast<Index>(c.size()) != per)
      throw std::invalid_argument("plan: shared pool is not class-balanced");
}

PartitionPlan make_partition_plan(std::span<const int> labels, int num_classes,
                                  const PartitionConfig& cfg, std::uint64_t seed) {
  Rng pool_rng = make_rng(seed, 1);
  Rng split_rng = make_rng(seed, 2);
  Rng sample_rng = make_rng(seed, 3);
  PoolSplit split = make_shared_pool(labels, num_classes, cfg.shared_per_class, pool_rng);

  PartitionPlan plan;
  plan.strategy = cfg.strategy;
  plan.alpha_share = cfg.alpha_share;
  plan.beta = cfg.beta;
  plan.seed = seed;
  switch (cfg.strategy) {
    case Strategy::iid:
      plan.client_indices = partition_iid(split.remainder, labels, cfg.clients, split_rng);
      break;
    case Strategy::one_class:
      plan.client_indices =
          partition_one_class(split.remainder, labels, num_classes, cfg.clients, split_rng);
      break;
    case Strategy::two_class:
      plan.client_indices =
          partition_two_class(split.remainder, labels, num_classes, cfg.clients, split_rng);
      break;
    case Strategy::dirichlet:
      plan.client_indices = partition_dirichlet(split.remainder, labels, num_classes,
                                                cfg.clients, cfg.beta, split_rng);
      break;
  }
  std::vector<char> used(labels.size(), 0);
  for (const auto& c : plan.client_indices)
    for (Index i : c) used[static_cast<std::size_t>(i)] = 1;
  for (Index i : split.remainder)
    if (!used[static_cast<std::size_t>(i)]) plan.unassigned.push_back(i);
  plan.shared_pool = std::move(split.pool);
  plan.shared_sample = sample_shared(plan.shared_pool, cfg.alpha_share, sample_rng);
  plan.validate(labels);
  return plan;
}

std::vector<std::vector<Index>> class_histograms(const PartitionPlan& plan,
                                                 std::span<const int> labels, int num_classes,
                                                 bool include_shared) {
  std::vector<std::vector<Index>> out;
  for (std::size_t k = 0; k < plan.client_indices.size(); ++k) {
    std::vector<Index> h(static_cast<std::size_t>(num_classes), 0);
    const IndexList set = include_shared ? plan.client_set(k) : plan.client_indices[k];
    for (Index i : set) ++h[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace advfl
