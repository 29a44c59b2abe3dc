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

#include "sfadapt/augment/d4.hpp"

#include <cstdint>

#include "sfadapt/errors.hpp"

namespace sfadapt::augment {

std::string D4Element::str() const {
  return std::string(flip ? "flip+" : "") + "rot" + std::to_string(rotation * 90);
}

// With R a quarter turn and F the flip, F R F = R^-1, so (R^k F)^-1 = R^k F
// and (R^k)^-1 = R^(4-k).
D4Element inverse(D4Element g) {
  if (g.flip) return g;
  return {(4 - g.rotation) % 4, false};
}

// (R^a F^f)(R^b F^g) = R^(a + (f ? -b : b)) F^(f xor g)
D4Element compose(D4Element second, D4Element first) {
  const int b = second.flip ? (4 - first.rotation) % 4 : first.rotation;
  return {(second.rotation + b) % 4, second.flip != first.flip};
}

std::array<D4Element, 8> all_d4() {
  return {D4Element{0, false}, D4Element{1, false}, D4Element{2, false},
          D4Element{3, false}, D4Element{0, true},  D4Element{1, true},
          D4Element{2, true},  D4Element{3, true}};
}

void validate_channel_kinds(std::span<const ChannelKind> kinds, int channels) {
  if (static_cast<int>(kinds.size()) != channels) {
    throw ShapeError("channel kinds: " + std::to_string(kinds.size()) +
                     " kinds given for " + std::to_string(channels) + " channels");
  }
  std::size_t i = 0;
  while (i < kinds.size()) {
    if (kinds[i] == ChannelKind::kScalar) {
      ++i;
    } else if (kinds[i] == ChannelKind::kVector2) {
      if (i + 1 >= kinds.size() || kinds[i + 1] != ChannelKind::kVector2) {
        throw ShapeError("channel kinds: vector2 channel " + std::to_string(i) +
                         " has no partner (vector2 channels come in pairs)");
      }
      i += 2;
    } else {
      throw ConfigError("channel kinds: unknown kind " +
                        std::to_string(static_cast<int>(kinds[i])));
    }
  }
}

ChannelKind parse_channel_kind(const std::string& s) {
  if (s == "scalar") return ChannelKind::kScalar;
  if (s == "vector2") return ChannelKind::kVector2;
  throw ConfigError("unknown channel kind '" + s + "'");
}

template <class T>
Tensor<T> apply_d4(D4Element g, const Tensor<T>& x, std::span<const ChannelKind> kinds) {
  validate_channel_kinds(kinds, x.c());
  if (g.rotation < 0 || g.rotation > 3) {
    throw ConfigError("D4 rotation must be in {0,1,2,3}");
  }
  const int H = x.h(), W = x.w();
  const bool swap = g.rotation % 2 == 1;
  const int oh = swap ? W : H, ow = swap ? H : W;

  // Destination index of every source pixel, and the integer matrix acting
  // on (u, v).
  std::vector<int32_t> dest(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      int px = g.flip ? W - 1 - xx : xx, py = y, cw = W, ch = H;
      for (int r = 0; r < g.rotation; ++r) {
        const int nx = py, ny = cw - 1 - px;
        px = nx;
        py = ny;
        std::swap(cw, ch);
      }
      dest[static_cast<std::size_t>(y) * W + xx] = py * ow + px;
    }
  }
  int m00 = g.flip ? -1 : 1, m01 = 0, m10 = 0, m11 = 1;
  for (int r = 0; r < g.rotation; ++r) {
    // (u, v) -> (v, -u)
    const int n00 = m10, n01 = m11, n10 = -m00, n11 = -m01;
    m00 = n00;
    m01 = n01;
    m10 = n10;
    m11 = n11;
  }

  Tensor<T> out(x.n(), x.c(), oh, ow);
  const std::size_t hw = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    int c = 0;
    while (c < x.c()) {
      if (kinds[c] == ChannelKind::kScalar) {
        const T* s = x.plane(n, c);
        T* d = out.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) d[dest[i]] = s[i];
        ++c;
        continue;
      }
      const T* su = x.plane(n, c);
      const T* sv = x.plane(n, c + 1);
      T* du = out.plane(n, c);
      T* dv = out.plane(n, c + 1);
      auto lin = [](int a, T u, int b, T v) {
        T r = T(0);
        if (a) r = a > 0 ? u : -u;
        if (b) r = b > 0 ? v : -v;
        return r;
      };
      for (std::size_t i = 0; i < hw; ++i) {
        du[dest[i]] = lin(m00, su[i], m01, sv[i]);
        dv[dest[i]] = lin(m10, su[i], m11, sv[i]);
      }
      c += 2;
    }
  }
  return out;
}

template Tensor<float> apply_d4(D4Element, const Tensor<float>&, std::span<const ChannelKind>);
template Tensor<double> apply_d4(D4Element, const Tensor<double>&, std::span<const ChannelKind>);
template Tensor<int32_t> apply_d4(D4Element, const Tensor<int32_t>&, std::span<const ChannelKind>);

}  // namespace sfadapt::augment
