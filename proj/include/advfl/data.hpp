#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "advfl/attacks.hpp"

namespace advfl {

/// Images in [0,1], one per row, with class ids and optional soft targets.
struct LabeledBatch {
  Matrix images;
  Shape shape;
  std::vector<int> labels;
  Index num_classes = 0;
  std::optional<Matrix> soft_targets;

  Index size() const { return images.rows(); }
  void validate() const;
  LabeledBatch subset(std::span<const Index> indices) const;
};

/// Row-wise concatenation; soft targets are kept only if both sides have them.
LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b);

/// Soft-label matrix: 1 - (N-1)/N * alpha at the true class, alpha/N elsewhere.
Matrix soft_labels(std::span<const int> labels, Index num_classes, double alpha_sl);

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: records of 1 label byte + 3072 channel-major pixels.

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& detail, std::uint64_t offset)
      : std::runtime_error(detail + " at byte offset " + std::to_string(offset)),
        detail_(detail),
        offset_(offset) {}
  const std::string& detail() const { return detail_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

inline constexpr Shape kCifarShape{3, 32, 32};
inline constexpr std::size_t kCifarRecordBytes = 3073;

LabeledBatch parse_cifar10(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_cifar10(const LabeledBatch& batch);
LabeledBatch read_cifar10_file(const std::filesystem::path& path);
void write_cifar10_file(const std::filesystem::path& path, const LabeledBatch& batch);

/// Reads data_batch_{1..5}.bin and test_batch.bin from `dir`.
std::pair<LabeledBatch, LabeledBatch> load_cifar10(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic "blob" images for desk-scale experiments.
//
// Each class owns a Gaussian bump at a fixed location (a large, sparse
// signal) and a +-1 background pattern scaled by `background_shift` (a small,
// dense signal spread over every pixel). Class geometry depends only on
// `seed`, so train and test splits drawn with different streams agree.

struct SyntheticSpec {
  int num_classes = 2;
  Index image_size = 8;
  double blob_amplitude = 0.3;
  double blob_sigma = 1.0;
  double jitter = 0.5;
  double background_shift = 0.03;
  double noise_sigma = 0.05;
  std::uint64_t seed = 7;

  void validate() const;
};

LabeledBatch make_synthetic(const SyntheticSpec& spec, int per_class, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Training-set augmentation.

struct AugmentPlan {
  Index crop_size = 32;
  Index crop_padding = 4;
  double hflip_prob = 0.5;
  bool include_pgd = true;
  bool include_gaussian = true;
  double alpha_sl = 0.05;
  AttackConfig attack{};

  void validate() const;
};

/// Zero-pads by `padding`, takes a random crop of the original size, and
/// mirrors horizontally with probability `hflip_prob`.
Matrix random_crop_flip(const Matrix& image, const Shape& shape, Index padding,
                        double hflip_prob, Rng& rng);

/// Returns [geometric-augmented clean; PGD of those (if enabled); Gaussian
/// noise of those (if enabled)], all carrying soft targets.
LabeledBatch augment_batch(const LabeledBatch& batch, const AugmentPlan& plan, const Network* net,
                           Rng& rng);

}  // namespace advfl
