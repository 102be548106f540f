#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advfl/types.hpp"

namespace advfl {

using IndexList = std::vector<Index>;

enum class Strategy { iid, one_class, two_class, dirichlet };

Strategy parse_strategy(const std::string& name);
std::string name_of(Strategy s);

/// Class-balanced pool reserved for data sharing: `per_class[c]` holds the
/// pooled example indices of class c.
struct SharedPool {
  std::vector<IndexList> per_class;

  Index per_class_count() const {
    return per_class.empty() ? 0 : static_cast<Index>(per_class.front().size());
  }
  IndexList all() const;
};

struct PoolSplit {
  SharedPool pool;
  IndexList remainder;  // ascending
};

/// Draws `per_class` indices of every class without replacement.
PoolSplit make_shared_pool(std::span<const int> labels, int num_classes, Index per_class,
                           Rng& rng);

/// floor(alpha * per_class) indices of each class from the pool, without
/// replacement. Every client receives this same list.
IndexList sample_shared(const SharedPool& pool, double alpha_share, Rng& rng);

/// Equal-size, class-balanced split: sizes and per-class counts differ by at
/// most one between clients.
std::vector<IndexList> partition_iid(std::span<const Index> remainder, std::span<const int> labels,
                                     int clients, Rng& rng);

/// Every client receives all remaining examples of one distinct class,
/// assigned by random permutation. Classes beyond the K chosen are unused.
std::vector<IndexList> partition_one_class(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, Rng& rng);

/// Each client receives two shards of two distinct classes. With 2K >= N
/// every class is cut into 2K/N shards (2K must be a multiple of N); with
/// 2K < N, 2K random classes form one shard each.
std::vector<IndexList> partition_two_class(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, Rng& rng);

/// Per class, client shares are drawn from Dirichlet(beta * 1_K) and turned
/// into counts by largest-remainder rounding, so every example is assigned
/// exactly once.
std::vector<IndexList> partition_dirichlet(std::span<const Index> remainder,
                                           std::span<const int> labels, int num_classes,
                                           int clients, double beta, Rng& rng);

/// Largest-remainder apportionment of `total` items by `weights`.
std::vector<Index> largest_remainder(std::span<const double> weights, Index total);

/// Local list followed by the shared sample; the two must be disjoint.
IndexList assemble_client_set(std::span<const Index> local, std::span<const Index> shared);

struct PartitionConfig {
  Strategy strategy = Strategy::iid;
  int clients = 5;
  Index shared_per_class = 0;
  double alpha_share = 0.0;
  double beta = 0.1;
};

struct PartitionPlan {
  Strategy strategy = Strategy::iid;
  double alpha_share = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<IndexList> client_indices;
  SharedPool shared_pool;
  IndexList shared_sample;
  IndexList unassigned;  // remainder examples no client received

  /// Client k's training set: local indices plus the shared sample.
  IndexList client_set(std::size_t k) const;
  /// Checks disjointness and coverage; throws on violation.
  void validate(std::span<const int> labels) const;
};

PartitionPlan make_partition_plan(std::span<const int> labels, int num_classes,
                                  const PartitionConfig& cfg, std::uint64_t seed);

/// Per-client class histogram rows (clients x classes).
std::vector<std::vector<Index>> class_histograms(const PartitionPlan& plan,
                                                 std::span<const int> labels, int num_classes,
                                                 bool include_shared);

}  // namespace advfl
