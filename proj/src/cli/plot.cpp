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

#include "sfadapt/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "sfadapt/synthdata/image_io.hpp"

namespace sfadapt::cli {

namespace {

struct Canvas {
  int w, h;
  std::vector<uint8_t> rgb;

  Canvas(int w_, int h_) : w(w_), h(h_), rgb(static_cast<std::size_t>(w_) * h_ * 3, 255) {}

  void put(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    uint8_t* p = &rgb[(static_cast<std::size_t>(y) * w + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      put(x0, y0, r, g, b);
      put(x0, y0 + 1, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::vector<double>& x,
                     const std::vector<Series>& series, const std::vector<double>& markers,
                     int width, int height) {
  Canvas c(width, height);
  const int left = 40, right = width - 20, top = 20, bottom = height - 30;
  double x_lo = x.empty() ? 0.0 : x.front(), x_hi = x.empty() ? 1.0 : x.back();
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  double y_hi = 1.0;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (std::isfinite(v)) y_hi = std::max(y_hi, v);
    }
  }
  auto px = [&](double v) { return left + static_cast<int>(std::lround((v - x_lo) / (x_hi - x_lo) * (right - left))); };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround(v / y_hi * (bottom - top))); };

  c.line(left, bottom, right, bottom, 0, 0, 0);
  c.line(left, top, left, bottom, 0, 0, 0);
  for (int k = 1; k <= 4; ++k) {
    const int y = py(y_hi * k / 4.0);
    for (int xx = left; xx <= right; xx += 4) c.put(xx, y, 200, 200, 200);
  }
  for (double m : markers) {
    const int xm = px(m);
    for (int y = top; y <= bottom; y += 3) c.put(xm, y, 120, 120, 120);
  }
  for (const auto& s : series) {
    int prev_x = -1, prev_y = -1;
    for (std::size_t i = 0; i < x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        prev_x = -1;
        continue;
      }
      const int cx = px(x[i]), cy = py(s.y[i]);
      if (prev_x >= 0) c.line(prev_x, prev_y, cx, cy, s.r, s.g, s.b);
      for (int d = -2; d <= 2; ++d) {
        c.put(cx + d, cy, s.r, s.g, s.b);
        c.put(cx, cy + d, s.r, s.g, s.b);
      }
      prev_x = cx;
      prev_y = cy;
    }
  }
  synthdata::write_png_rgb8(path, height, width, c.rgb);
}

}  // namespace sfadapt::cli
