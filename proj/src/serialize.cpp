#include "advfl/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace advfl {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'F', 'L', 'N', 'N', '\0'};

enum class Tag : std::uint32_t { dense = 1, conv2d, batchnorm, activation, flatten, residual };

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(Index v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t offset() const { return pos_; }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n)
      throw std::runtime_error("model file truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  Index i64() { return static_cast<Index>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct Descriptor {
  Tag tag = Tag::flatten;
  Index geom[4] = {0, 0, 0, 0};
  bool batchnorm = false;
  double bn_momentum = 0.0;
  double bn_eps = 0.0;
  Activation act{};
};

Descriptor describe(const Layer& layer) {
  Descriptor d;
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, DenseLayer>) {
          d.tag = Tag::dense;
          d.geom[0] = l.in_features;
          d.geom[1] = l.out_features;
        } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
          d.tag = Tag::conv2d;
          d.geom[0] = l.in_channels;
          d.geom[1] = l.out_channels;
          d.geom[2] = l.kernel;
          d.geom[3] = l.padding;
        } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
          d.tag = Tag::batchnorm;
          d.geom[0] = l.channels;
          d.bn_momentum = l.momentum;
          d.bn_eps = l.eps;
        } else if constexpr (std::is_same_v<T, ActivationLayer>) {
          d.tag = Tag::activation;
          d.act = l.activation;
        } else if constexpr (std::is_same_v<T, FlattenLayer>) {
          d.tag = Tag::flatten;
        } else {
          d.tag = Tag::residual;
          d.geom[0] = l.channels;
          d.batchnorm = l.batchnorm;
          d.act = l.activation;
        }
      },
      layer);
  return d;
}

Layer rebuild(const Descriptor& d, std::size_t i) {
  switch (d.tag) {
    case Tag::dense:
      return DenseLayer{d.geom[0], d.geom[1]};
    case Tag::conv2d:
      return Conv2dLayer{d.geom[0], d.geom[1], d.geom[2], d.geom[3]};
    case Tag::batchnorm:
      return BatchNormLayer{d.geom[0], d.bn_momentum, d.bn_eps};
    case Tag::activation:
      return ActivationLayer{d.act};
    case Tag::flatten:
      return FlattenLayer{};
    case Tag::residual:
      return ResidualBlock{d.geom[0], d.act, d.batchnorm};
  }
  throw std::runtime_error("layer " + std::to_string(i) + ": unknown layer tag " +
                           std::to_string(static_cast<std::uint32_t>(d.tag)));
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Network& net) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kModelVersion);
  w.i64(net.input_shape().channels);
  w.i64(net.input_shape().height);
  w.i64(net.input_shape().width);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    const Descriptor d = describe(layer);
    w.u32(static_cast<std::uint32_t>(d.tag));
    for (Index g : d.geom) w.i64(g);
    w.u8(d.batchnorm ? 1 : 0);
    w.f64(d.bn_momentum);
    w.f64(d.bn_eps);
    w.u32(static_cast<std::uint32_t>(d.act.kind));
    w.f64(d.act.rrelu_lower);
    w.f64(d.act.rrelu_upper);
    w.f64(d.act.celu_alpha);
    w.f64(d.act.hardtanh_min);
    w.f64(d.act.hardtanh_max);
    w.f64(d.act.softplus_beta);
  }
  w.u64(static_cast<std::uint64_t>(net.params().size()));
  for (double v : net.params()) w.f64(v);
  w.u64(static_cast<std::uint64_t>(net.buffers().size()));
  for (double v : net.buffers()) w.f64(v);
  return w.take();
}

Network decode_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a model file (bad magic)");
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model version " + std::to_string(version));
  Shape input;
  input.channels = r.i64();
  input.height = r.i64();
  input.width = r.i64();
  const std::uint32_t n_layers = r.u32();
  r.need(static_cast<std::size_t>(n_layers) * kDescriptorBytes);

  Network net(input);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Descriptor d;
    d.tag = static_cast<Tag>(r.u32());
    for (Index& g : d.geom) g = r.i64();
    d.batchnorm = r.u8() != 0;
    d.bn_momentum = r.f64();
    d.bn_eps = r.f64();
    const std::uint32_t kind = r.u32();
    if (kind >= kAllActivations.size())
      throw std::runtime_error("layer " + std::to_string(i) + ": unknown activation kind " +
                               std::to_string(kind));
    d.act.kind = static_cast<ActivationKind>(kind);
    d.act.rrelu_lower = r.f64();
    d.act.rrelu_upper = r.f64();
    d.act.celu_alpha = r.f64();
    d.act.hardtanh_min = r.f64();
    d.act.hardtanh_max = r.f64();
    d.act.softplus_beta = r.f64();
    net.add(rebuild(d, i));
  }

  const std::uint64_t n_params = r.u64();
  if (n_params != static_cast<std::uint64_t>(net.param_count()))
    throw std::runtime_error("model file has " + std::to_string(n_params) +
                             " parameters but its layers need " +
                             std::to_string(net.param_count()));
  r.need(n_params * 8);
  for (double& v : net.params()) v = r.f64();
  const std::uint64_t n_buffers = r.u64();
  if (n_buffers != static_cast<std::uint64_t>(net.buffers().size()))
    throw std::runtime_error("model file has " + std::to_string(n_buffers) +
                             " buffers but its layers need " +
                             std::to_string(net.buffers().size()));
  r.need(n_buffers * 8);
  for (double& v : net.buffers()) v = r.f64();
  if (!r.done())
    throw std::runtime_error("trailing bytes after model body at byte " + std::to_string(r.offset()));
  return net;
}

void save_model(const std::filesystem::path& path, const Network& net) {
  const auto bytes = encode_model(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_model(bytes);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace advfl
