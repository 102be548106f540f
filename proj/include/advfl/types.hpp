#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace advfl {

using Index = Eigen::Index;

// A batch is stored one example per row; the columns hold the example's
// features in channel-major (C, H, W) order.
template <typename Scalar>
using BatchOf = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorOf = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = BatchOf<double>;
using Vector = VectorOf<double>;

using Rng = std::mt19937_64;

enum class Mode { train, test };

/// Per-example feature geometry.
struct Shape {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  Index size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// SplitMix64 finalizer; used to derive independent seeds for sub-streams
/// (per client, per round, per example) so results do not depend on the
/// order in which work is scheduled.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix_seed(seed, stream));
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

}  // namespace advfl
