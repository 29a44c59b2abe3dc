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

#include "sfadapt/instances/instances.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sfadapt/errors.hpp"

namespace sfadapt::instances {

void DecodeConfig::validate() const {
  if (!(prob_threshold >= 0.0 && prob_threshold <= 1.0)) {
    throw ConfigError("decode: prob_threshold must be in [0, 1]");
  }
  if (steps < 0 || !(step_size > 0.0) || bin_size < 1 || min_size < 0) {
    throw ConfigError("decode: steps >= 0, step_size > 0, bin_size >= 1, min_size >= 0 required");
  }
}

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = {{"prob_threshold", c.prob_threshold},
       {"steps", c.steps},
       {"step_size", c.step_size},
       {"bin_size", c.bin_size},
       {"min_size", c.min_size}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "prob_threshold") c.prob_threshold = v.get<double>();
    else if (key == "steps") c.steps = v.get<int>();
    else if (key == "step_size") c.step_size = v.get<double>();
    else if (key == "bin_size") c.bin_size = v.get<int>();
    else if (key == "min_size") c.min_size = v.get<int>();
    else throw ConfigError("decode config: unknown key '" + key + "'");
  }
  c.validate();
}

int InstanceLabeling::count() const {
  int32_t mx = 0;
  for (int32_t v : labels) mx = std::max(mx, v);
  return mx;
}

void validate(const InstanceLabeling& l) {
  if (l.height < 0 || l.width < 0 ||
      l.labels.size() != static_cast<std::size_t>(l.height) * l.width) {
    throw DataError("instance labeling: size does not match its dimensions");
  }
  const int k = l.count();
  std::vector<char> seen(static_cast<std::size_t>(k) + 1, 0);
  for (int32_t v : l.labels) {
    if (v < 0) throw DataError("instance labeling: negative id");
    seen[v] = 1;
  }
  for (int i = 1; i <= k; ++i) {
    if (!seen[i]) throw DataError("instance labeling: ids not contiguous (missing " + std::to_string(i) + ")");
  }
}

InstanceLabeling relabel_contiguous(const InstanceLabeling& l) {
  InstanceLabeling out(l.height, l.width);
  std::map<int32_t, int32_t> remap;
  for (std::size_t i = 0; i < l.labels.size(); ++i) {
    const int32_t v = l.labels[i];
    if (v <= 0) continue;
    auto [it, inserted] = remap.try_emplace(v, static_cast<int32_t>(remap.size()) + 1);
    out.labels[i] = it->second;
  }
  return out;
}

bool same_partition(const InstanceLabeling& a, const InstanceLabeling& b) {
  return a.height == b.height && a.width == b.width &&
         relabel_contiguous(a) == relabel_contiguous(b);
}

template <class T>
InstanceLabeling decode_instances(std::span<const T> cell_prob, std::span<const T> flow_u,
                                  std::span<const T> flow_v, int height, int width,
                                  const DecodeConfig& cfg) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (cell_prob.size() != hw || flow_u.size() != hw || flow_v.size() != hw) {
    throw ShapeError("decode_instances: plane sizes do not match " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  for (std::size_t i = 0; i < hw; ++i) {
    if (!std::isfinite(static_cast<double>(flow_u[i])) ||
        !std::isfinite(static_cast<double>(flow_v[i]))) {
      throw NumericError("decode_instances: non-finite flow");
    }
  }
  if (cfg.bin_size < 1 || cfg.steps < 0) throw ConfigError("decode_instances: bad config");

  auto sample = [&](std::span<const T> f, double px, double py) {
    const int x0 = static_cast<int>(px), y0 = static_cast<int>(py);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double fx = px - x0, fy = py - y0;
    const double a = f[static_cast<std::size_t>(y0) * width + x0];
    const double b = f[static_cast<std::size_t>(y0) * width + x1];
    const double c = f[static_cast<std::size_t>(y1) * width + x0];
    const double d = f[static_cast<std::size_t>(y1) * width + x1];
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
  };

  const int bh = (height + cfg.bin_size - 1) / cfg.bin_size;
  const int bw = (width + cfg.bin_size - 1) / cfg.bin_size;
  std::vector<int> pixel_bin(hw, -1);
  std::vector<int> bin_sink(static_cast<std::size_t>(bh) * bw, 0);  // 0 empty, -1 occupied
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (!(static_cast<double>(cell_prob[i]) > cfg.prob_threshold)) continue;
      double px = x, py = y;
      for (int s = 0; s < cfg.steps; ++s) {
        const double u = sample(flow_u, px, py), v = sample(flow_v, px, py);
        const double nx = std::clamp(px + cfg.step_size * u, 0.0, width - 1.0);
        const double ny = std::clamp(py + cfg.step_size * v, 0.0, height - 1.0);
        const bool still = nx == px && ny == py;
        px = nx;
        py = ny;
        if (still) break;
      }
      const int ex = static_cast<int>(std::lround(px)), ey = static_cast<int>(std::lround(py));
      const int b = (ey / cfg.bin_size) * bw + ex / cfg.bin_size;
      pixel_bin[i] = b;
      bin_sink[b] = -1;
    }
  }

  // 8-connected components of occupied bins, numbered in raster order.
  int sinks = 0;
  std::vector<int> stack;
  for (int b0 = 0; b0 < bh * bw; ++b0) {
    if (bin_sink[b0] != -1) continue;
    bin_sink[b0] = ++sinks;
    stack.assign(1, b0);
    while (!stack.empty()) {
      const int b = stack.back();
      stack.pop_back();
      const int by = b / bw, bx = b % bw;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = by + dy, nx = bx + dx;
          if (ny < 0 || ny >= bh || nx < 0 || nx >= bw) continue;
          const int nb = ny * bw + nx;
          if (bin_sink[nb] == -1) {
            bin_sink[nb] = sinks;
            stack.push_back(nb);
          }
        }
      }
    }
  }

  InstanceLabeling out(height, width);
  std::vector<int> sizes(static_cast<std::size_t>(sinks) + 1, 0);
  for (std::size_t i = 0; i < hw; ++i) {
    if (pixel_bin[i] < 0) continue;
    out.labels[i] = bin_sink[pixel_bin[i]];
    ++sizes[out.labels[i]];
  }
  for (auto& v : out.labels) {
    if (v > 0 && sizes[v] < cfg.min_size) v = 0;
  }
  return relabel_contiguous(out);
}

template <class T>
InstanceLabeling decode_item(const Tensor<T>& prob, const Tensor<T>& flow, int n,
                             const DecodeConfig& cfg) {
  if (prob.c() < 2 || flow.c() != 2 || prob.h() != flow.h() || prob.w() != flow.w() ||
      n < 0 || n >= prob.n() || n >= flow.n()) {
    throw ShapeError("decode_item: incompatible shapes " + prob.shape().str() + " / " +
                     flow.shape().str());
  }
  const std::size_t hw = prob.shape().plane();
  return decode_instances<T>({prob.plane(n, 1), hw}, {flow.plane(n, 0), hw},
                             {flow.plane(n, 1), hw}, prob.h(), prob.w(), cfg);
}

template <class T>
std::vector<InstanceLabeling> decode_batch(const Tensor<T>& prob, const Tensor<T>& flow,
                                           const DecodeConfig& cfg) {
  std::vector<InstanceLabeling> out;
  out.reserve(static_cast<std::size_t>(prob.n()));
  for (int n = 0; n < prob.n(); ++n) out.push_back(decode_item(prob, flow, n, cfg));
  return out;
}

namespace {

struct Overlap {
  int na = 0, nb = 0;
  std::vector<long> area_a, area_b, inter;  // inter is (na+1) x (nb+1)
};

Overlap overlap(const InstanceLabeling& a, const InstanceLabeling& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("instance matching: shape mismatch " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
  Overlap o;
  o.na = a.count();
  o.nb = b.count();
  o.area_a.assign(o.na + 1, 0);
  o.area_b.assign(o.nb + 1, 0);
  o.inter.assign(static_cast<std::size_t>(o.na + 1) * (o.nb + 1), 0);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const int32_t la = a.labels[i], lb = b.labels[i];
    ++o.area_a[la];
    ++o.area_b[lb];
    ++o.inter[static_cast<std::size_t>(la) * (o.nb + 1) + lb];
  }
  return o;
}

double iou_of(const Overlap& o, int ia, int ib) {
  const long in = o.inter[static_cast<std::size_t>(ia) * (o.nb + 1) + ib];
  if (in == 0) return 0.0;
  return static_cast<double>(in) / static_cast<double>(o.area_a[ia] + o.area_b[ib] - in);
}

}  // namespace

std::vector<double> iou_matrix(const InstanceLabeling& a, const InstanceLabeling& b) {
  const Overlap o = overlap(a, b);
  std::vector<double> m(static_cast<std::size_t>(o.na) * o.nb);
  for (int i = 1; i <= o.na; ++i) {
    for (int j = 1; j <= o.nb; ++j) m[static_cast<std::size_t>(i - 1) * o.nb + (j - 1)] = iou_of(o, i, j);
  }
  return m;
}

MatchReport match_instances(const InstanceLabeling& a, const InstanceLabeling& b,
                            double iou_threshold) {
  const Overlap o = overlap(a, b);
  std::vector<MatchedPair> cand;
  for (int i = 1; i <= o.na; ++i) {
    for (int j = 1; j <= o.nb; ++j) {
      const double iou = iou_of(o, i, j);
      if (iou > 0.0 && iou >= iou_threshold) cand.push_back({i, j, iou});
    }
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const MatchedPair& x, const MatchedPair& y) { return x.iou > y.iou; });
  std::vector<char> used_a(o.na + 1, 0), used_b(o.nb + 1, 0);
  MatchReport r;
  for (const auto& c : cand) {
    if (used_a[c.id_a] || used_b[c.id_b]) continue;
    used_a[c.id_a] = used_b[c.id_b] = 1;
    r.matched_pairs.push_back(c);
  }
  r.tp = static_cast<int>(r.matched_pairs.size());
  r.fn = o.na - r.tp;
  r.fp = o.nb - r.tp;
  return r;
}

double fn_rate(const InstanceLabeling& initial, const InstanceLabeling& current,
               double iou_threshold) {
  const MatchReport r = match_instances(initial, current, iou_threshold);
  return FnCounts{r.tp, r.fn}.rate();
}

FnCounts fn_counts(std::span<const InstanceLabeling> initial,
                   std::span<const InstanceLabeling> current, double iou_threshold) {
  if (initial.size() != current.size()) {
    throw ShapeError("fn_counts: image count mismatch");
  }
  FnCounts c;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    const MatchReport r = match_instances(initial[i], current[i], iou_threshold);
    c.tp += r.tp;
    c.fn += r.fn;
  }
  return c;
}

double average_precision(const InstanceLabeling& pred, const InstanceLabeling& truth,
                         double iou_threshold) {
  const MatchReport r = match_instances(truth, pred, iou_threshold);
  const int denom = r.tp + r.fp + r.fn;
  return denom == 0 ? 1.0 : static_cast<double>(r.tp) / denom;
}

ApReport average_precision(std::span<const InstanceLabeling> pred,
                           std::span<const InstanceLabeling> truth, double iou_threshold) {
  if (pred.size() != truth.size()) throw ShapeError("average_precision: image count mismatch");
  ApReport rep;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    MatchReport r = match_instances(truth[i], pred[i], iou_threshold);
    const int denom = r.tp + r.fp + r.fn;
    rep.per_image_ap.push_back(denom == 0 ? 1.0 : static_cast<double>(r.tp) / denom);
    rep.tp += r.tp;
    rep.fp += r.fp;
    rep.fn += r.fn;
    rep.per_image.push_back(std::move(r));
  }
  if (!rep.per_image_ap.empty()) {
    rep.mean_ap = std::accumulate(rep.per_image_ap.begin(), rep.per_image_ap.end(), 0.0) /
                  static_cast<double>(rep.per_image_ap.size());
  }
  return rep;
}

template InstanceLabeling decode_instances(std::span<const float>, std::span<const float>,
                                           std::span<const float>, int, int, const DecodeConfig&);
template InstanceLabeling decode_instances(std::span<const double>, std::span<const double>,
                                           std::span<const double>, int, int, const DecodeConfig&);
template InstanceLabeling decode_item(const Tensor<float>&, const Tensor<float>&, int, const DecodeConfig&);
template InstanceLabeling decode_item(const Tensor<double>&, const Tensor<double>&, int, const DecodeConfig&);
template std::vector<InstanceLabeling> decode_batch(const Tensor<float>&, const Tensor<float>&, const DecodeConfig&);
template std::vector<InstanceLabeling> decode_batch(const Tensor<double>&, const Tensor<double>&, const DecodeConfig&);

}  // namespace sfadapt::instances
