// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sfadapt/model/unet.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <Eigen/Dense>

#include "sfadapt/errors.hpp"

namespace sfadapt::model {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kNormEps = 1e-5;

// Rows are (channel, ky, kx), columns are (item, y, x). Zero padding k/2.
template <class T>
std::vector<T> im2col(const Tensor<T>& x, int k) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w(), pad = k / 2;
  const std::size_t hw = x.shape().plane(), np = N * hw;
  std::vector<T> col(static_cast<std::size_t>(C) * k * k * np, T(0));
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * np;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
        for (int n = 0; n < N; ++n) {
          const T* src = x.plane(n, c);
          T* d = dst + n * hw;
          for (int y = 0; y < H; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            std::copy(src + sy * W + x0 + dx, src + sy * W + x1 + dx, d + y * W + x0);
          }
        }
      }
    }
  }
  return col;
}

template <class T>
void col2im_add(const T* col, int k, Tensor<T>& dx) {
  const int N = dx.n(), C = dx.c(), H = dx.h(), W = dx.w(), pad = k / 2;
  const std::size_t hw = dx.shape().plane(), np = N * hw;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * np;
        const int dy = ky - pad, dxo = kx - pad;
        const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
        for (int n = 0; n < N; ++n) {
          T* d = dx.plane(n, c);
          const T* s = src + n * hw;
          for (int y = 0; y < H; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            T* drow = d + sy * W + dxo;
            const T* srow = s + y * W;
            for (int xx = x0; xx < x1; ++xx) drow[xx] += srow[xx];
          }
        }
      }
    }
  }
}

template <class T>
Tensor<T> conv_forward(const std::vector<T>& col, const T* weight, const T* bias,
                       int cout, int fan_in, Shape4 in) {
  const std::size_t hw = in.plane(), np = in.n * hw;
  Eigen::Map<const RowMat<T>> w(weight, cout, fan_in);
  Eigen::Map<const RowMat<T>> c(col.data(), fan_in, static_cast<Eigen::Index>(np));
  RowMat<T> y = w * c;
  Tensor<T> out(in.n, cout, in.h, in.w);
  for (int n = 0; n < in.n; ++n) {
    for (int co = 0; co < cout; ++co) {
      const T* src = y.data() + co * np + n * hw;
      T* dst = out.plane(n, co);
      const T b = bias ? bias[co] : T(0);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
    }
  }
  return out;
}

// Accumulates weight/bias gradients; returns the input gradient if asked.
template <class T>
Tensor<T> conv_backward(const std::vector<T>& col, const T* weight, T* d_weight,
                        T* d_bias, int cout, int fan_in, int k, Shape4 in,
                        const Tensor<T>& d_out, bool need_input_grad) {
  const std::size_t hw = in.plane(), np = in.n * hw;
  RowMat<T> g(cout, static_cast<Eigen::Index>(np));
  for (int n = 0; n < in.n; ++n) {
    for (int co = 0; co < cout; ++co) {
      std::copy_n(d_out.plane(n, co), hw, g.data() + co * np + n * hw);
    }
  }
  Eigen::Map<const RowMat<T>> c(col.data(), fan_in, static_cast<Eigen::Index>(np));
  Eigen::Map<RowMat<T>> dw(d_weight, cout, fan_in);
  dw.noalias() += g * c.transpose();
  if (d_bias) {
    for (int co = 0; co < cout; ++co) d_bias[co] += g.row(co).sum();
  }
  if (!need_input_grad) return {};
  Eigen::Map<const RowMat<T>> w(weight, cout, fan_in);
  RowMat<T> dcol = w.transpose() * g;
  Tensor<T> dx(in);
  col2im_add(dcol.data(), k, dx);
  return dx;
}

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  Tensor<T> out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* s = x.plane(n, c);
      T* d = out.plane(n, c);
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) {
          const T* p = s + 2 * y * x.w() + 2 * xx;
          d[y * out.w() + xx] = (p[0] + p[1] + p[x.w()] + p[x.w() + 1]) * T(0.25);
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> avg_pool2_backward(const Tensor<T>& d_out) {
  Tensor<T> dx(d_out.n(), d_out.c(), d_out.h() * 2, d_out.w() * 2);
  for (int n = 0; n < dx.n(); ++n) {
    for (int c = 0; c < dx.c(); ++c) {
      const T* s = d_out.plane(n, c);
      T* d = dx.plane(n, c);
      for (int y = 0; y < dx.h(); ++y) {
        for (int xx = 0; xx < dx.w(); ++xx) {
          d[y * dx.w() + xx] = s[(y / 2) * d_out.w() + xx / 2] * T(0.25);
        }
      }
    }
  }
  return dx;
}

// Nearest-neighbour 2x upsampling of `x`, plus `skip`.
template <class T>
Tensor<T> upsample2_add(const Tensor<T>& x, const Tensor<T>& skip) {
  Tensor<T> out = skip;
  for (int n = 0; n < out.n(); ++n) {
    for (int c = 0; c < out.c(); ++c) {
      const T* s = x.plane(n, c);
      T* d = out.plane(n, c);
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) {
          d[y * out.w() + xx] += s[(y / 2) * x.w() + xx / 2];
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T>& d_out) {
  Tensor<T> dx(d_out.n(), d_out.c(), d_out.h() / 2, d_out.w() / 2);
  for (int n = 0; n < d_out.n(); ++n) {
    for (int c = 0; c < d_out.c(); ++c) {
      const T* s = d_out.plane(n, c);
      T* d = dx.plane(n, c);
      for (int y = 0; y < d_out.h(); ++y) {
        for (int xx = 0; xx < d_out.w(); ++xx) {
          d[(y / 2) * dx.w() + xx / 2] += s[y * d_out.w() + xx];
        }
      }
    }
  }
  return dx;
}

template <class T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += x.data()[i];
}

}  // namespace

template <class T>
UNet<T>::UNet(UNetConfig cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  if (cfg_.in_channels < 1 || cfg_.base_width < 1 || cfg_.num_classes < 2) {
    throw ConfigError("UNet: invalid configuration");
  }
  const int w = cfg_.base_width;
  add_block("enc1", cfg_.in_channels, w);
  add_block("enc2", w, 2 * w);
  add_block("enc3", 2 * w, 4 * w);
  add_block("bottleneck", 4 * w, 4 * w);
  add_block("dec3", 4 * w, 2 * w);
  add_block("dec2", 2 * w, w);
  add_block("dec1", w, w);
  const int head_out = cfg_.num_classes + 2;
  head_w_ = add_param("head.weight", {head_out, w, 1, 1});
  head_b_ = add_param("head.bias", {head_out});

  std::mt19937_64 rng(seed);
  for (const auto& b : blocks_) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * b.in)));
    for (auto& v : params_[b.conv_w].value) v = static_cast<T>(dist(rng));
    std::fill(params_[b.norm_g].value.begin(), params_[b.norm_g].value.end(), T(1));
  }
  std::normal_distribution<double> head_dist(0.0, std::sqrt(1.0 / w));
  for (auto& v : params_[head_w_].value) v = static_cast<T>(head_dist(rng));
}

template <class T>
int UNet<T>::add_param(const std::string& name, std::vector<int64_t> shape) {
  std::size_t numel = 1;
  for (auto d : shape) numel *= static_cast<std::size_t>(d);
  params_.push_back({name, std::move(shape), std::vector<T>(numel, T(0)),
                     std::vector<T>(numel, T(0))});
  return static_cast<int>(params_.size()) - 1;
}

template <class T>
void UNet<T>::add_block(const std::string& name, int in, int out) {
  BlockSpec b{in, out, 0, 0, 0};
  b.conv_w = add_param(name + ".conv.weight", {out, in, 3, 3});
  b.norm_g = add_param(name + ".norm.weight", {out});
  b.norm_b = add_param(name + ".norm.bias", {out});
  blocks_.push_back(b);
}

template <class T>
std::string UNet<T>::architecture_id() const {
  return "unet3-add-w" + std::to_string(cfg_.base_width) + "-in" +
         std::to_string(cfg_.in_channels) + "-c" + std::to_string(cfg_.num_classes);
}

template <class T>
Tensor<T> UNet<T>::block_forward(int bi, const Tensor<T>& x, BlockCache* cache) const {
  const BlockSpec& b = blocks_[bi];
  std::vector<T> col = im2col(x, 3);
  Tensor<T> y = conv_forward(col, params_[b.conv_w].value.data(), static_cast<const T*>(nullptr),
                             b.out, 9 * b.in, x.shape());
  const T* gamma = params_[b.norm_g].value.data();
  const T* beta = params_[b.norm_b].value.data();
  const std::size_t hw = y.shape().plane();
  std::vector<T> xhat, inv_std;
  if (cache) {
    xhat.resize(y.size());
    inv_std.resize(static_cast<std::size_t>(y.n()) * y.c());
  }
  for (int n = 0; n < y.n(); ++n) {
    for (int c = 0; c < y.c(); ++c) {
      T* p = y.plane(n, c);
      double mean = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kNormEps));
      const T m = static_cast<T>(mean);
      const std::size_t base = y.index(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (p[i] - m) * inv;
        if (cache) xhat[base + i] = xh;
        const T v = gamma[c] * xh + beta[c];
        p[i] = v > T(0) ? v : T(0);
      }
      if (cache) inv_std[static_cast<std::size_t>(n) * y.c() + c] = inv;
    }
  }
  if (cache) {
    cache->in_shape = x.shape();
    cache->col = std::move(col);
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->out = y;
  }
  return y;
}

template <class T>
Tensor<T> UNet<T>::block_backward(int bi, const BlockCache& cache, const Tensor<T>& d_out,
                                  bool need_input_grad) {
  const BlockSpec& b = blocks_[bi];
  const T* gamma = params_[b.norm_g].value.data();
  T* d_gamma = params_[b.norm_g].grad.data();
  T* d_beta = params_[b.norm_b].grad.data();
  const std::size_t hw = d_out.shape().plane();
  const double m = static_cast<double>(hw);

  Tensor<T> d_conv(d_out.shape());
  std::vector<double> dxhat(hw);
  for (int n = 0; n < d_out.n(); ++n) {
    for (int c = 0; c < d_out.c(); ++c) {
      const std::size_t base = d_out.index(n, c, 0, 0);
      const T* dy = d_out.data() + base;
      const T* out = cache.out.data() + base;
      const T* xh = cache.xhat.data() + base;
      double sum_dy_xh = 0.0, sum_dy = 0.0, sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double g = out[i] > T(0) ? static_cast<double>(dy[i]) : 0.0;
        sum_dy += g;
        sum_dy_xh += g * xh[i];
        dxhat[i] = g * gamma[c];
        sum_dxh += dxhat[i];
        sum_dxh_xh += dxhat[i] * xh[i];
      }
      d_gamma[c] += static_cast<T>(sum_dy_xh);
      d_beta[c] += static_cast<T>(sum_dy);
      const double inv = cache.inv_std[static_cast<std::size_t>(n) * d_out.c() + c];
      T* dx = d_conv.data() + base;
      for (std::size_t i = 0; i < hw; ++i) {
        dx[i] = static_cast<T>(inv / m * (m * dxhat[i] - sum_dxh - xh[i] * sum_dxh_xh));
      }
    }
  }
  return conv_backward(cache.col, params_[b.conv_w].value.data(),
                       params_[b.conv_w].grad.data(), static_cast<T*>(nullptr), b.out,
                       9 * b.in, 3, cache.in_shape, d_conv, need_input_grad);
}

template <class T>
SegmentationOutput<T> UNet<T>::run(const Tensor<T>& x, Tape* tape) const {
  if (x.c() != cfg_.in_channels) {
    throw ShapeError("UNet: expected " + std::to_string(cfg_.in_channels) +
                     " input channels, got " + x.shape().str());
  }
  if (x.n() < 1 || x.h() < kDownsampleFactor || x.w() < kDownsampleFactor ||
      x.h() % kDownsampleFactor != 0 || x.w() % kDownsampleFactor != 0) {
    throw ShapeError("UNet: height and width must be positive multiples of " +
                     std::to_string(kDownsampleFactor) + ", got " + x.shape().str());
  }
  if (!x.all_finite()) throw NumericError("UNet: non-finite input");

  BlockCache* c = nullptr;
  if (tape) {
    tape->blocks.assign(blocks_.size(), BlockCache{});
    c = tape->blocks.data();
  }
  auto cache = [&](int i) { return c ? c + i : nullptr; };

  const Tensor<T> e1 = block_forward(0, x, cache(0));
  const Tensor<T> e2 = block_forward(1, avg_pool2(e1), cache(1));
  const Tensor<T> e3 = block_forward(2, avg_pool2(e2), cache(2));
  Tensor<T> bott = block_forward(3, avg_pool2(e3), cache(3));
  const Tensor<T> d3 = block_forward(4, upsample2_add(bott, e3), cache(4));
  const Tensor<T> d2 = block_forward(5, upsample2_add(d3, e2), cache(5));
  Tensor<T> d1 = block_forward(6, upsample2_add(d2, e1), cache(6));

  const int head_out = cfg_.num_classes + 2;
  Tensor<T> out = conv_forward(im2col(d1, 1), params_[head_w_].value.data(),
                               params_[head_b_].value.data(), head_out,
                               cfg_.base_width, d1.shape());

  SegmentationOutput<T> result;
  result.class_logits = slice_channels(out, 0, cfg_.num_classes);
  result.flow = slice_channels(out, cfg_.num_classes, 2);
  result.bottleneck = Tensor<T>(bott.n(), bott.c(), 1, 1);
  const std::size_t hw = bott.shape().plane();
  for (int n = 0; n < bott.n(); ++n) {
    for (int ch = 0; ch < bott.c(); ++ch) {
      const T* p = bott.plane(n, ch);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
      result.bottleneck(n, ch, 0, 0) = static_cast<T>(s / static_cast<double>(hw));
    }
  }
  result.bottleneck_map = std::move(bott);
  if (tape) tape->head_in = std::move(d1);
  return result;
}

template <class T>
SegmentationOutput<T> UNet<T>::forward(const Tensor<T>& images) const {
  return run(images, nullptr);
}

template <class T>
SegmentationOutput<T> UNet<T>::forward_train(const Tensor<T>& images, Tape& tape) const {
  return run(images, &tape);
}

template <class T>
void UNet<T>::backward(const Tape& tape, const Tensor<T>& d_logits, const Tensor<T>& d_flow) {
  if (tape.blocks.size() != blocks_.size()) {
    throw Error("UNet::backward: tape was not recorded by forward_train");
  }
  const Shape4 in = tape.head_in.shape();
  const int ncls = cfg_.num_classes;
  Tensor<T> d_out(in.n, ncls + 2, in.h, in.w);
  const std::size_t hw = in.plane();
  auto put = [&](const Tensor<T>& src, int channels, int offset) {
    if (src.empty()) return;
    if (src.shape() != Shape4{in.n, channels, in.h, in.w}) {
      throw ShapeError("UNet::backward: gradient shape " + src.shape().str() +
                       " does not match the taped output");
    }
    for (int n = 0; n < in.n; ++n) {
      std::copy_n(src.plane(n, 0), channels * hw, d_out.plane(n, offset));
    }
  };
  put(d_logits, ncls, 0);
  put(d_flow, 2, ncls);

  const std::vector<T> head_col = im2col(tape.head_in, 1);
  Tensor<T> g = conv_backward(head_col, params_[head_w_].value.data(),
                              params_[head_w_].grad.data(), params_[head_b_].grad.data(),
                              ncls + 2, cfg_.base_width, 1, in, d_out, true);
  const auto& b = tape.blocks;
  Tensor<T> g_e1 = block_backward(6, b[6], g, true);
  Tensor<T> g_e2 = block_backward(5, b[5], upsample2_backward(g_e1), true);
  Tensor<T> g_e3 = block_backward(4, b[4], upsample2_backward(g_e2), true);
  const Tensor<T> g_bott_in = block_backward(3, b[3], upsample2_backward(g_e3), true);
  add_into(g_e3, avg_pool2_backward(g_bott_in));
  add_into(g_e2, avg_pool2_backward(block_backward(2, b[2], g_e3, true)));
  add_into(g_e1, avg_pool2_backward(block_backward(1, b[1], g_e2, true)));
  block_backward(0, b[0], g_e1, false);
}

template <class T>
void UNet<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <class T>
ParamSnapshot UNet<T>::snapshot(int64_t iteration) const {
  ParamSnapshot s;
  s.architecture = architecture_id();
  s.iteration = iteration;
  s.seed = seed_;
  s.entries.reserve(params_.size());
  for (const auto& p : params_) {
    s.entries.push_back({p.name, p.shape, std::vector<double>(p.value.begin(), p.value.end())});
  }
  return s;
}

template <class T>
void UNet<T>::restore(const ParamSnapshot& snap) {
  if (snap.architecture != architecture_id()) {
    throw ArchitectureMismatch("architecture mismatch: snapshot is '" + snap.architecture +
                               "', network is '" + architecture_id() + "'");
  }
  check_compatible(snapshot(), snap);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = snap.entries[i].values;
    std::transform(src.begin(), src.end(), params_[i].value.begin(),
                   [](double v) { return static_cast<T>(v); });
  }
  seed_ = snap.seed;
}

template <class T>
Tensor<T> extract_embedding(const UNet<T>& net, const Tensor<T>& images) {
  return net.forward(images).bottleneck;
}

template <class T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const int C = logits.c();
  const std::size_t hw = logits.shape().plane();
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = logits.plane(n, 0)[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, logits.plane(n, c)[i]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(logits.plane(n, c)[i] - mx);
        p.plane(n, c)[i] = e;
        sum += e;
      }
      for (int c = 0; c < C; ++c) p.plane(n, c)[i] /= sum;
    }
  }
  return p;
}

UNetConfig parse_architecture_id(const std::string& id) {
  UNetConfig c;
  int used = 0;
  if (std::sscanf(id.c_str(), "unet3-add-w%d-in%d-c%d%n", &c.base_width, &c.in_channels,
                  &c.num_classes, &used) != 3 ||
      used != static_cast<int>(id.size()) || c.base_width < 1 || c.in_channels < 1 ||
      c.num_classes < 2) {
    throw ArchitectureMismatch("unknown architecture id '" + id + "'");
  }
  return c;
}

template class UNet<float>;
template class UNet<double>;
template Tensor<float> extract_embedding(const UNet<float>&, const Tensor<float>&);
template Tensor<double> extract_embedding(const UNet<double>&, const Tensor<double>&);
template Tensor<float> softmax_channels(const Tensor<float>&);
template Tensor<double> softmax_channels(const Tensor<double>&);

}  // namespace sfadapt::model
