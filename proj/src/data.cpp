#include "advfl/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace advfl {

void LabeledBatch::validate() const {
  if (images.cols() != shape.size())
    throw std::invalid_argument("batch: image width " + std::to_string(images.cols()) +
                                " does not match shape " + to_string(shape));
  if (static_cast<Index>(labels.size()) != images.rows())
    throw std::invalid_argument("batch: label count does not match image count");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("batch: label " + std::to_string(y) + " out of range");
  if (images.size() > 0 && (images.minCoeff() < 0.0 || images.maxCoeff() > 1.0))
    throw std::invalid_argument("batch: pixel outside [0,1]");
  if (soft_targets && (soft_targets->rows() != images.rows() || soft_targets->cols() != num_classes))
    throw std::invalid_argument("batch: soft target shape mismatch");
}

LabeledBatch LabeledBatch::subset(std::span<const Index> indices) const {
  LabeledBatch out;
  out.shape = shape;
  out.num_classes = num_classes;
  out.images.resize(static_cast<Index>(indices.size()), images.cols());
  out.labels.reserve(indices.size());
  if (soft_targets) out.soft_targets = Matrix(static_cast<Index>(indices.size()), num_classes);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index src = indices[i];
    if (src < 0 || src >= size()) throw std::out_of_range("batch subset index out of range");
    out.images.row(static_cast<Index>(i)) = images.row(src);
    out.labels.push_back(labels[static_cast<std::size_t>(src)]);
    if (soft_targets) out.soft_targets->row(static_cast<Index>(i)) = soft_targets->row(src);
  }
  return out;
}

LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (!(a.shape == b.shape) || a.num_classes != b.num_classes)
    throw std::invalid_argument("concat: incompatible batches");
  LabeledBatch out;
  out.shape = a.shape;
  out.num_classes = a.num_classes;
  out.images.resize(a.size() + b.size(), a.images.cols());
  out.images << a.images, b.images;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  if (a.soft_targets && b.soft_targets) {
    Matrix t(out.images.rows(), a.num_classes);
    t << *a.soft_targets, *b.soft_targets;
    out.soft_targets = std::move(t);
  }
  return out;
}

Matrix soft_labels(std::span<const int> labels, Index num_classes, double alpha_sl) {
  if (!(alpha_sl >= 0.0 && alpha_sl <= 1.0))
    throw std::invalid_argument("soft_labels: alpha_sl must be in [0,1]");
  if (num_classes < 1) throw std::invalid_argument("soft_labels: need at least one class");
  const double n = static_cast<double>(num_classes);
  const double off = alpha_sl / n;
  const double on = 1.0 - (n - 1.0) / n * alpha_sl;
  Matrix t = Matrix::Constant(static_cast<Index>(labels.size()), num_classes, off);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("soft_labels: invalid class id " + std::to_string(labels[i]));
    t(static_cast<Index>(i), labels[i]) = on;
  }
  return t;
}

// ---------------------------------------------------------------------------

LabeledBatch parse_cifar10(std::span<const std::uint8_t> bytes) {
  const std::size_t pixels = kCifarRecordBytes - 1;
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0)
    throw ParseError("truncated record (" + std::to_string(bytes.size() % kCifarRecordBytes) +
                         " trailing bytes)",
                     records * kCifarRecordBytes);
  LabeledBatch out;
  out.shape = kCifarShape;
  out.num_classes = 10;
  out.images.resize(static_cast<Index>(records), static_cast<Index>(pixels));
  out.labels.resize(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecordBytes;
    const std::uint8_t label = bytes[offset];
    if (label > 9) throw ParseError("invalid label byte " + std::to_string(label), offset);
    out.labels[r] = label;
    for (std::size_t p = 0; p < pixels; ++p)
      out.images(static_cast<Index>(r), static_cast<Index>(p)) =
          static_cast<double>(bytes[offset + 1 + p]) / 255.0;
  }
  return out;
}

std::vector<std::uint8_t> encode_cifar10(const LabeledBatch& batch) {
  if (!(batch.shape == kCifarShape)) throw std::invalid_argument("encode_cifar10: not 3x32x32");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(batch.size()) * kCifarRecordBytes);
  for (Index r = 0; r < batch.size(); ++r) {
    const int y = batch.labels[static_cast<std::size_t>(r)];
    if (y < 0 || y > 9) throw std::invalid_argument("encode_cifar10: label out of range");
    bytes.push_back(static_cast<std::uint8_t>(y));
    for (Index p = 0; p < batch.images.cols(); ++p) {
      const double v = std::clamp(batch.images(r, p), 0.0, 1.0);
      bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return bytes;
}

LabeledBatch read_cifar10_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_cifar10(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_cifar10_file(const std::filesystem::path& path, const LabeledBatch& batch) {
  const auto bytes = encode_cifar10(batch);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::pair<LabeledBatch, LabeledBatch> load_cifar10(const std::filesystem::path& dir) {
  LabeledBatch train;
  for (int i = 1; i <= 5; ++i)
    train = concat(train, read_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin")));
  return {std::move(train), read_cifar10_file(dir / "test_batch.bin")};
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synthetic: num_classes must be >= 2");
  if (image_size < 3) throw std::invalid_argument("synthetic: image_size must be >= 3");
  if (!(blob_sigma > 0.0)) throw std::invalid_argument("synthetic: blob_sigma must be > 0");
  if (!(noise_sigma >= 0.0) || !(jitter >= 0.0))
    throw std::invalid_argument("synthetic: noise_sigma and jitter must be >= 0");
}

LabeledBatch make_synthetic(const SyntheticSpec& spec, int per_class, std::uint64_t stream) {
  spec.validate();
  if (per_class < 0) throw std::invalid_argument("synthetic: per_class must be >= 0");
  const Index side = spec.image_size;
  const Index pixels = side * side;
  const int n = spec.num_classes;

  // Class geometry: blob centres on a ring, +-1 background patterns.
  Rng geometry(mix_seed(spec.seed, 0));
  std::bernoulli_distribution coin(0.5);
  Matrix patterns(n, pixels);
  for (Index p = 0; p < pixels; ++p) patterns(0, p) = coin(geometry) ? 1.0 : -1.0;
  for (int c = 1; c < n; ++c)
    for (Index p = 0; p < pixels; ++p)
      patterns(c, p) = n == 2 ? -patterns(0, p) : (coin(geometry) ? 1.0 : -1.0);
  const double mid = (static_cast<double>(side) - 1.0) / 2.0;
  const double radius = 0.3 * static_cast<double>(side);
  std::vector<std::pair<double, double>> centres;
  for (int c = 0; c < n; ++c) {
    const double angle = 2.0 * M_PI * c / n;
    centres.emplace_back(mid + radius * std::sin(angle), mid + radius * std::cos(angle));
  }

  Rng rng(mix_seed(spec.seed, stream + 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledBatch out;
  out.shape = {1, side, side};
  out.num_classes = n;
  out.images.resize(static_cast<Index>(per_class) * n, pixels);
  out.labels.reserve(static_cast<std::size_t>(per_class * n));
  Index row = 0;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < n; ++c, ++row) {
      const double cy = centres[static_cast<std::size_t>(c)].first + spec.jitter * gauss(rng);
      const double cx = centres[static_cast<std::size_t>(c)].second + spec.jitter * gauss(rng);
      for (Index h = 0; h < side; ++h) {
        for (Index w = 0; w < side; ++w) {
          const double d2 = (h - cy) * (h - cy) + (w - cx) * (w - cx);
          const Index p = h * side + w;
          const double v = 0.5 + spec.background_shift * patterns(c, p) +
                           spec.blob_amplitude * std::exp(-d2 / (2.0 * spec.blob_sigma * spec.blob_sigma)) +
                           spec.noise_sigma * gauss(rng);
          out.images(row, p) = std::clamp(v, 0.0, 1.0);
        }
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void AugmentPlan::validate() const {
  if (crop_padding < 0) throw std::invalid_argument("augment: crop_padding must be >= 0");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0))
    throw std::invalid_argument("augment: hflip_prob must be in [0,1]");
  if (!(alpha_sl >= 0.0 && alpha_sl <= 1.0))
    throw std::invalid_argument("augment: alpha_sl must be in [0,1]");
  attack.validate();
}

Matrix random_crop_flip(const Matrix& image, const Shape& shape, Index padding, double hflip_prob,
                        Rng& rng) {
  std::uniform_int_distribution<Index> offset(0, 2 * padding);
  const Index dy = offset(rng) - padding;
  const Index dx = offset(rng) - padding;
  const bool flip = std::bernoulli_distribution(hflip_prob)(rng);
  Matrix out = Matrix::Zero(1, image.cols());
  for (Index c = 0; c < shape.channels; ++c) {
    for (Index h = 0; h < shape.height; ++h) {
      const Index sh = h + dy;
      if (sh < 0 || sh >= shape.height) continue;
      for (Index w = 0; w < shape.width; ++w) {
        const Index tw = flip ? shape.width - 1 - w : w;
        const Index sw = w + dx;
        if (sw < 0 || sw >= shape.width) continue;
        out(0, (c * shape.height + h) * shape.width + tw) =
            image(0, (c * shape.height + sh) * shape.width + sw);
      }
    }
  }
  return out;
}

LabeledBatch augment_batch(const LabeledBatch& batch, const AugmentPlan& plan, const Network* net,
                           Rng& rng) {
  plan.validate();
  if (plan.include_pgd && net == nullptr)
    throw std::invalid_argument("augment_batch: PGD augmentation requires a network");
  if (plan.crop_padding > 0 &&
      (plan.crop_size != batch.shape.height || plan.crop_size != batch.shape.width))
    throw std::invalid_argument("augment_batch: crop_size " + std::to_string(plan.crop_size) +
                                " does not match image size " + to_string(batch.shape));
  const std::uint64_t base = rng();

  LabeledBatch clean;
  clean.shape = batch.shape;
  clean.num_classes = batch.num_classes;
  clean.labels = batch.labels;
  clean.images = batch.images;
  if (plan.crop_padding > 0 || plan.hflip_prob > 0.0) {
    for (Index i = 0; i < batch.size(); ++i) {
      Rng local = make_rng(base, static_cast<std::uint64_t>(i));
      clean.images.row(i) = random_crop_flip(batch.images.row(i), batch.shape, plan.crop_padding,
                                             plan.hflip_prob, local);
    }
  }
  clean.soft_targets = soft_labels(clean.labels, clean.num_classes, plan.alpha_sl);
  LabeledBatch out = clean;

  if (plan.include_pgd) {
    Rng pgd_rng = make_rng(base, static_cast<std::uint64_t>(batch.size()));
    LabeledBatch adv = clean;
    adv.images = pgd(*net, clean.images, clean.labels, plan.attack, pgd_rng);
    out = concat(out, adv);
  }
  if (plan.include_gaussian) {
    LabeledBatch noisy = clean;
    for (Index i = 0; i < batch.size(); ++i) {
      Rng local = make_rng(base ^ 0xA5A5A5A5A5A5A5A5ULL, static_cast<std::uint64_t>(i));
      noisy.images.row(i) =
          gaussian_noise(clean.images.row(i), plan.attack.noise_mu, plan.attack.noise_sigma, local);
    }
    out = concat(out, noisy);
  }
  return out;
}

}  // namespace advfl
