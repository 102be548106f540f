#include "advfl/layers.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace advfl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using ConstRowMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<Matrix>;

Index conv_params(const Conv2dLayer& c) {
  return c.out_channels * c.in_channels * c.kernel * c.kernel + c.out_channels;
}

Conv2dLayer block_conv(const ResidualBlock& r) { return {r.channels, r.channels, 3, 1}; }
BatchNormLayer block_bn(const ResidualBlock& r) { return {r.channels, 0.1, 1e-5}; }

Shape conv_out(const Conv2dLayer& c, const Shape& in) {
  if (in.channels != c.in_channels) {
    std::ostringstream os;
    os << "conv2d expects " << c.in_channels << " input channels, got " << in.channels;
    throw std::invalid_argument(os.str());
  }
  const Index h = in.height + 2 * c.padding - c.kernel + 1;
  const Index w = in.width + 2 * c.padding - c.kernel + 1;
  if (h < 1 || w < 1) throw std::invalid_argument("conv2d kernel larger than padded input");
  return {c.out_channels, h, w};
}

// im2col for a whole batch. Rows index (ci, ki, kj); columns index
// (example, oh, ow).
Eigen::MatrixXd im2col(const Conv2dLayer& c, const Shape& in, const Shape& out, const Matrix& x) {
  const Index k = c.kernel;
  const Index spatial = out.height * out.width;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(c.in_channels * k * k, x.rows() * spatial);
  for (Index b = 0; b < x.rows(); ++b) {
    for (Index ci = 0; ci < c.in_channels; ++ci) {
      for (Index ki = 0; ki < k; ++ki) {
        for (Index kj = 0; kj < k; ++kj) {
          const Index row = (ci * k + ki) * k + kj;
          for (Index oh = 0; oh < out.height; ++oh) {
            const Index ih = oh + ki - c.padding;
            if (ih < 0 || ih >= in.height) continue;
            for (Index ow = 0; ow < out.width; ++ow) {
              const Index iw = ow + kj - c.padding;
              if (iw < 0 || iw >= in.width) continue;
              cols(row, b * spatial + oh * out.width + ow) =
                  x(b, (ci * in.height + ih) * in.width + iw);
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Conv2dLayer& c, const Shape& in, const Shape& out, const Eigen::MatrixXd& cols,
              Index batch) {
  const Index k = c.kernel;
  const Index spatial = out.height * out.width;
  Matrix dx = Matrix::Zero(batch, in.size());
  for (Index b = 0; b < batch; ++b) {
    for (Index ci = 0; ci < c.in_channels; ++ci) {
      for (Index ki = 0; ki < k; ++ki) {
        for (Index kj = 0; kj < k; ++kj) {
          const Index row = (ci * k + ki) * k + kj;
          for (Index oh = 0; oh < out.height; ++oh) {
            const Index ih = oh + ki - c.padding;
            if (ih < 0 || ih >= in.height) continue;
            for (Index ow = 0; ow < out.width; ++ow) {
              const Index iw = ow + kj - c.padding;
              if (iw < 0 || iw >= in.width) continue;
              dx(b, (ci * in.height + ih) * in.width + iw) +=
                  cols(row, b * spatial + oh * out.width + ow);
            }
          }
        }
      }
    }
  }
  return dx;
}

Matrix conv_forward(const Conv2dLayer& c, const Shape& in, const Matrix& x,
                    std::span<const double> p, LayerCache* cache) {
  const Shape out = conv_out(c, in);
  const Index fan = c.in_channels * c.kernel * c.kernel;
  const ConstRowMap weight(p.data(), c.out_channels, fan);
  const Eigen::Map<const Vector> bias(p.data() + c.out_channels * fan, c.out_channels);
  Eigen::MatrixXd cols = im2col(c, in, out, x);
  Eigen::MatrixXd prod = weight * cols;
  prod.colwise() += bias;
  const Index spatial = out.height * out.width;
  Matrix y(x.rows(), out.size());
  for (Index b = 0; b < x.rows(); ++b)
    for (Index co = 0; co < c.out_channels; ++co)
      y.row(b).segment(co * spatial, spatial) = prod.row(co).segment(b * spatial, spatial);
  if (cache != nullptr) cache->aux = cols;
  return y;
}

Matrix conv_backward(const Conv2dLayer& c, const Shape& in, const Matrix& grad_out,
                     std::span<const double> p, const LayerCache& cache,
                     std::span<double> grad_params) {
  const Shape out = conv_out(c, in);
  const Index fan = c.in_channels * c.kernel * c.kernel;
  const Index spatial = out.height * out.width;
  const Index batch = grad_out.rows();
  Eigen::MatrixXd g(c.out_channels, batch * spatial);
  for (Index b = 0; b < batch; ++b)
    for (Index co = 0; co < c.out_channels; ++co)
      g.row(co).segment(b * spatial, spatial) = grad_out.row(b).segment(co * spatial, spatial);
  const ConstRowMap weight(p.data(), c.out_channels, fan);
  if (!grad_params.empty()) {
    RowMap gw(grad_params.data(), c.out_channels, fan);
    Eigen::Map<Vector> gb(grad_params.data() + c.out_channels * fan, c.out_channels);
    gw.noalias() += g * cache.aux.transpose();
    gb += g.rowwise().sum();
  }
  const Eigen::MatrixXd dcols = weight.transpose() * g;
  return col2im(c, in, out, dcols, batch);
}

Matrix dense_forward(const DenseLayer& d, const Matrix& x, std::span<const double> p) {
  const ConstRowMap weight(p.data(), d.out_features, d.in_features);
  const Eigen::Map<const Vector> bias(p.data() + d.out_features * d.in_features, d.out_features);
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Matrix dense_backward(const DenseLayer& d, const Matrix& grad_out, std::span<const double> p,
                      const LayerCache& cache, std::span<double> grad_params) {
  const ConstRowMap weight(p.data(), d.out_features, d.in_features);
  if (!grad_params.empty()) {
    RowMap gw(grad_params.data(), d.out_features, d.in_features);
    Eigen::Map<Vector> gb(grad_params.data() + d.out_features * d.in_features, d.out_features);
    gw.noalias() += grad_out.transpose() * cache.input;
    gb += grad_out.colwise().sum().transpose();
  }
  return grad_out * weight;
}

// Views a [B, C*HW] batch as per-channel blocks of B rows x HW columns.
Matrix bn_forward(const BatchNormLayer& bn, const Shape& in, const Matrix& x,
                  std::span<const double> p, std::span<const double> buffers, Mode mode,
                  LayerCache* cache) {
  const Index hw = in.height * in.width;
  const Index count = x.rows() * hw;
  Vector mean(bn.channels), inv_std(bn.channels), unbiased(bn.channels);
  for (Index c = 0; c < bn.channels; ++c) {
    const auto block = x.middleCols(c * hw, hw);
    if (mode == Mode::train) {
      const double m = block.mean();
      const double var = (block.array() - m).square().sum() / static_cast<double>(count);
      mean(c) = m;
      inv_std(c) = 1.0 / std::sqrt(var + bn.eps);
      unbiased(c) = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1)
                              : var;
    } else {
      mean(c) = buffers[c];
      inv_std(c) = 1.0 / std::sqrt(buffers[bn.channels + c] + bn.eps);
    }
  }
  Matrix xhat(x.rows(), x.cols());
  Matrix y(x.rows(), x.cols());
  for (Index c = 0; c < bn.channels; ++c) {
    xhat.middleCols(c * hw, hw) = (x.middleCols(c * hw, hw).array() - mean(c)) * inv_std(c);
    y.middleCols(c * hw, hw) = xhat.middleCols(c * hw, hw).array() * p[c] + p[bn.channels + c];
  }
  if (cache != nullptr) {
    cache->aux = std::move(xhat);
    cache->stat_a = mean;
    cache->stat_b = inv_std;
    if (mode == Mode::train) cache->batch_var = unbiased;
  }
  return y;
}

Matrix bn_backward(const BatchNormLayer& bn, const Shape& in, const Matrix& grad_out,
                   std::span<const double> p, Mode mode, const LayerCache& cache,
                   std::span<double> grad_params) {
  const Index hw = in.height * in.width;
  const double count = static_cast<double>(grad_out.rows() * hw);
  Matrix dx(grad_out.rows(), grad_out.cols());
  for (Index c = 0; c < bn.channels; ++c) {
    const auto dy = grad_out.middleCols(c * hw, hw).array();
    const auto xhat = cache.aux.middleCols(c * hw, hw).array();
    const double sum_dy = dy.sum();
    const double sum_dy_xhat = (dy * xhat).sum();
    if (!grad_params.empty()) {
      grad_params[c] += sum_dy_xhat;
      grad_params[bn.channels + c] += sum_dy;
    }
    const double gamma = p[c];
    if (mode == Mode::train) {
      dx.middleCols(c * hw, hw) =
          (gamma * cache.stat_b(c) / count) * (count * dy - sum_dy - xhat * sum_dy_xhat);
    } else {
      dx.middleCols(c * hw, hw) = dy * (gamma * cache.stat_b(c));
    }
  }
  return dx;
}

struct BlockOffsets {
  Index conv1 = 0, bn1 = 0, conv2 = 0, bn2 = 0, end = 0;
  Index buf_bn1 = 0, buf_bn2 = 0, buf_end = 0;
};

BlockOffsets block_offsets(const ResidualBlock& r) {
  BlockOffsets o;
  const Index cp = conv_params(block_conv(r));
  const Index bp = r.batchnorm ? 2 * r.channels : 0;
  o.conv1 = 0;
  o.bn1 = cp;
  o.conv2 = cp + bp;
  o.bn2 = 2 * cp + bp;
  o.end = 2 * cp + 2 * bp;
  o.buf_bn1 = 0;
  o.buf_bn2 = bp;
  o.buf_end = 2 * bp;
  return o;
}

}  // namespace

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "[" << s.channels << "x" << s.height << "x" << s.width << "]";
  return os.str();
}

std::string layer_name(const Layer& layer) {
  return std::visit(
      overloaded{
          [](const DenseLayer& d) {
            return "dense(" + std::to_string(d.in_features) + "->" +
                   std::to_string(d.out_features) + ")";
          },
          [](const Conv2dLayer& c) {
            return "conv2d(" + std::to_string(c.in_channels) + "->" +
                   std::to_string(c.out_channels) + ", k=" + std::to_string(c.kernel) + ")";
          },
          [](const BatchNormLayer& b) { return "batchnorm(" + std::to_string(b.channels) + ")"; },
          [](const ActivationLayer& a) {
            return "activation(" + std::string(name_of(a.activation.kind)) + ")";
          },
          [](const FlattenLayer&) { return std::string("flatten"); },
          [](const ResidualBlock& r) {
            return "residual(" + std::to_string(r.channels) + (r.batchnorm ? ", bn)" : ")");
          },
      },
      layer);
}

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) {
            if (in.size() != d.in_features)
              throw std::invalid_argument("dense expects " + std::to_string(d.in_features) +
                                          " features, got " + std::to_string(in.size()));
            return Shape{d.out_features, 1, 1};
          },
          [&](const Conv2dLayer& c) { return conv_out(c, in); },
          [&](const BatchNormLayer& b) {
            if (in.channels != b.channels)
              throw std::invalid_argument("batchnorm expects " + std::to_string(b.channels) +
                                          " channels, got " + std::to_string(in.channels));
            return in;
          },
          [&](const ActivationLayer&) { return in; },
          [&](const FlattenLayer&) { return Shape{in.size(), 1, 1}; },
          [&](const ResidualBlock& r) {
            if (in.channels != r.channels)
              throw std::invalid_argument("residual block expects " +
                                          std::to_string(r.channels) + " channels, got " +
                                          std::to_string(in.channels));
            return in;
          },
      },
      layer);
}

Index param_count(const Layer& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) {
                          return d.out_features * d.in_features + d.out_features;
                        },
                        [](const Conv2dLayer& c) { return conv_params(c); },
                        [](const BatchNormLayer& b) { return 2 * b.channels; },
                        [](const ActivationLayer&) { return Index{0}; },
                        [](const FlattenLayer&) { return Index{0}; },
                        [](const ResidualBlock& r) { return block_offsets(r).end; },
                    },
                    layer);
}

Index buffer_count(const Layer& layer) {
  if (const auto* b = std::get_if<BatchNormLayer>(&layer)) return 2 * b->channels;
  if (const auto* r = std::get_if<ResidualBlock>(&layer)) return block_offsets(*r).buf_end;
  return 0;
}

void init_layer(const Layer& layer, std::span<double> params, std::span<double> buffers,
                Rng& rng) {
  auto uniform_fill = [&rng](std::span<double> out, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : out) v = dist(rng);
  };
  auto init_bn = [](Index channels, std::span<double> p, std::span<double> buf) {
    for (Index c = 0; c < channels; ++c) {
      p[c] = 1.0;
      p[channels + c] = 0.0;
      buf[c] = 0.0;
      buf[channels + c] = 1.0;
    }
  };
  std::visit(overloaded{
                 [&](const DenseLayer& d) { uniform_fill(params, d.in_features); },
                 [&](const Conv2dLayer& c) {
                   uniform_fill(params, c.in_channels * c.kernel * c.kernel);
                 },
                 [&](const BatchNormLayer& b) { init_bn(b.channels, params, buffers); },
                 [](const ActivationLayer&) {},
                 [](const FlattenLayer&) {},
                 [&](const ResidualBlock& r) {
                   const BlockOffsets o = block_offsets(r);
                   const Conv2dLayer conv = block_conv(r);
                   const Index cp = conv_params(conv);
                   uniform_fill(params.subspan(o.conv1, cp), r.channels * 9);
                   uniform_fill(params.subspan(o.conv2, cp), r.channels * 9);
                   if (r.batchnorm) {
                     init_bn(r.channels, params.subspan(o.bn1, 2 * r.channels),
                             buffers.subspan(o.buf_bn1, 2 * r.channels));
                     init_bn(r.channels, params.subspan(o.bn2, 2 * r.channels),
                             buffers.subspan(o.buf_bn2, 2 * r.channels));
                   }
                 },
             },
             layer);
}

Matrix layer_forward(const Layer& layer, const Shape& in, const Matrix& x,
                     std::span<const double> params, std::span<const double> buffers,
                     const LayerContext& ctx, LayerCache* cache) {
  if (x.cols() != in.size())
    throw std::invalid_argument(layer_name(layer) + ": expected " + std::to_string(in.size()) +
                                " input features, got " + std::to_string(x.cols()));
  if (cache != nullptr) cache->input = x;
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) { return dense_forward(d, x, params); },
          [&](const Conv2dLayer& c) { return conv_forward(c, in, x, params, cache); },
          [&](const BatchNormLayer& b) {
            return bn_forward(b, in, x, params, buffers, ctx.mode, cache);
          },
          [&](const ActivationLayer& a) {
            Matrix slopes;
            Matrix y = act_eval(a.activation, x, ctx.mode, ctx.rng, &slopes);
            if (cache != nullptr) cache->aux = std::move(slopes);
            return y;
          },
          [&](const FlattenLayer&) { return x; },
          [&](const ResidualBlock& r) {
            const BlockOffsets o = block_offsets(r);
            const Conv2dLayer conv = block_conv(r);
            const BatchNormLayer bn = block_bn(r);
            const Index cp = conv_params(conv);
            const Index bp = 2 * r.channels;
            LayerCache* kids = nullptr;
            if (cache != nullptr) {
              cache->children.assign(5, LayerCache{});
              kids = cache->children.data();
            }
            auto child = [&](int i) { return kids == nullptr ? nullptr : kids + i; };
            const std::span<const double> none;
            Matrix h = layer_forward(conv, in, x, params.subspan(o.conv1, cp), none, ctx, child(0));
            if (r.batchnorm)
              h = layer_forward(bn, in, h, params.subspan(o.bn1, bp),
                                buffers.subspan(o.buf_bn1, bp), ctx, child(1));
            h = layer_forward(ActivationLayer{r.activation}, in, h, none, none, ctx, child(2));
            h = layer_forward(conv, in, h, params.subspan(o.conv2, cp), none, ctx, child(3));
            if (r.batchnorm)
              h = layer_forward(bn, in, h, params.subspan(o.bn2, bp),
                                buffers.subspan(o.buf_bn2, bp), ctx, child(4));
            return Matrix(x + h);
          },
      },
      layer);
}

Matrix layer_backward(const Layer& layer, const Shape& in, const Matrix& grad_out,
                      std::span<const double> params, std::span<const double> buffers,
                      Mode mode, const LayerCache& cache, std::span<double> grad_params) {
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) {
            return dense_backward(d, grad_out, params, cache, grad_params);
          },
          [&](const Conv2dLayer& c) {
            return conv_backward(c, in, grad_out, params, cache, grad_params);
          },
          [&](const BatchNormLayer& b) {
            return bn_backward(b, in, grad_out, params, mode, cache, grad_params);
          },
          [&](const ActivationLayer& a) {
            const Matrix* slopes = cache.aux.size() > 0 ? &cache.aux : nullptr;
            return Matrix(grad_out.cwiseProduct(
                act_derivative(a.activation, cache.input, mode, slopes)));
          },
          [&](const FlattenLayer&) { return grad_out; },
          [&](const ResidualBlock& r) {
            const BlockOffsets o = block_offsets(r);
            const Conv2dLayer conv = block_conv(r);
            const BatchNormLayer bn = block_bn(r);
            const Index cp = conv_params(conv);
            const Index bp = 2 * r.channels;
            const auto& kids = cache.children;
            auto gsub = [&](Index off, Index n) {
              return grad_params.empty() ? std::span<double>{} : grad_params.subspan(off, n);
            };
            const std::span<const double> none;
            Matrix g = grad_out;
            if (r.batchnorm)
              g = layer_backward(bn, in, g, params.subspan(o.bn2, bp),
                                 buffers.subspan(o.buf_bn2, bp), mode, kids[4], gsub(o.bn2, bp));
            g = layer_backward(conv, in, g, params.subspan(o.conv2, cp), none, mode, kids[3],
                               gsub(o.conv2, cp));
            g = layer_backward(ActivationLayer{r.activation}, in, g, none, none, mode, kids[2], {});
            if (r.batchnorm)
              g = layer_backward(bn, in, g, params.subspan(o.bn1, bp),
                                 buffers.subspan(o.buf_bn1, bp), mode, kids[1], gsub(o.bn1, bp));
            g = layer_backward(conv, in, g, params.subspan(o.conv1, cp), none, mode, kids[0],
                               gsub(o.conv1, cp));
            return Matrix(grad_out + g);
          },
      },
      layer);
}

void update_running_stats(const Layer& layer, std::span<double> buffers, const LayerCache& cache) {
  auto update = [](const BatchNormLayer& b, std::span<double> buf, const LayerCache& c) {
    if (c.batch_var.size() != b.channels) return;
    for (Index ch = 0; ch < b.channels; ++ch) {
      buf[ch] = (1.0 - b.momentum) * buf[ch] + b.momentum * c.stat_a(ch);
      buf[b.channels + ch] = (1.0 - b.momentum) * buf[b.channels + ch] + b.momentum * c.batch_var(ch);
    }
  };
  if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
    update(*b, buffers, cache);
  } else if (const auto* r = std::get_if<ResidualBlock>(&layer)) {
    if (!r->batchnorm || cache.children.size() != 5) return;
    const BlockOffsets o = block_offsets(*r);
    const BatchNormLayer bn = block_bn(*r);
    update(bn, buffers.subspan(o.buf_bn1, 2 * r->channels), cache.children[1]);
    update(bn, buffers.subspan(o.buf_bn2, 2 * r->channels), cache.children[4]);
  }
}

}  // namespace advfl
