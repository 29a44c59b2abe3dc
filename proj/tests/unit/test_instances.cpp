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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/instances/instances.hpp"

using namespace sfadapt;
using namespace sfadapt::instances;

namespace {

struct Blob {
  int cx, cy;
  double r;
};

// Disc masks with analytic unit-capped vectors toward each disc centre.
struct Fixture {
  int h, w;
  std::vector<double> prob, u, v;
  InstanceLabeling truth;

  Fixture(int h_, int w_, const std::vector<Blob>& blobs)
      : h(h_), w(w_), prob(h_ * w_, 0.0), u(h_ * w_, 0.0), v(h_ * w_, 0.0), truth(h_, w_) {
    for (std::size_t k = 0; k < blobs.size(); ++k) {
      const auto& b = blobs[k];
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double dx = b.cx - x, dy = b.cy - y, d = std::hypot(dx, dy);
          if (d > b.r) continue;
          const int i = y * w + x;
          prob[i] = 0.95;
          u[i] = d > 1.0 ? dx / d : dx;
          v[i] = d > 1.0 ? dy / d : dy;
          truth.labels[i] = static_cast<int32_t>(k + 1);
        }
      }
    }
  }

  InstanceLabeling decode(const DecodeConfig& cfg = {}) const {
    return decode_instances<double>(prob, u, v, h, w, cfg);
  }
};

InstanceLabeling from_rows(const std::vector<std::vector<int>>& rows) {
  InstanceLabeling l(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < l.height; ++y) {
    for (int x = 0; x < l.width; ++x) l.at(y, x) = rows[y][x];
  }
  return l;
}

InstanceLabeling random_labeling(std::mt19937_64& rng, int h, int w, int max_instances) {
  InstanceLabeling l(h, w);
  const int k = 1 + static_cast<int>(rng() % max_instances);
  for (int id = 1; id <= k; ++id) {
    const int x0 = rng() % w, y0 = rng() % h;
    const int x1 = std::min(w, x0 + 2 + static_cast<int>(rng() % 7));
    const int y1 = std::min(h, y0 + 2 + static_cast<int>(rng() % 7));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) l.at(y, x) = id;
    }
  }
  return relabel_contiguous(l);
}

// Copy of `a` with every instance shifted by up to one pixel.
InstanceLabeling jitter(const InstanceLabeling& a, std::mt19937_64& rng) {
  InstanceLabeling b(a.height, a.width);
  std::map<int, std::pair<int, int>> shift;
  for (int id = 1; id <= a.count(); ++id) {
    shift[id] = {static_cast<int>(rng() % 3) - 1, static_cast<int>(rng() % 3) - 1};
  }
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const int id = a.at(y, x);
      if (id == 0) continue;
      const int ny = y + shift[id].second, nx = x + shift[id].first;
      if (ny >= 0 && ny < a.height && nx >= 0 && nx < a.width) b.at(ny, nx) = id;
    }
  }
  return relabel_contiguous(b);
}

// Exhaustive maximum-cardinality one-to-one matching over pairs with
// IoU >= threshold, IoU computed directly from pixel sets.
int optimal_tp(const InstanceLabeling& a, const InstanceLabeling& b, double thr) {
  const int na = a.count(), nb = b.count();
  std::vector<std::vector<double>> iou(na + 1, std::vector<double>(nb + 1, 0.0));
  for (int i = 1; i <= na; ++i) {
    for (int j = 1; j <= nb; ++j) {
      long inter = 0, uni = 0;
      for (std::size_t p = 0; p < a.labels.size(); ++p) {
        const bool ia = a.labels[p] == i, jb = b.labels[p] == j;
        inter += ia && jb;
        uni += ia || jb;
      }
      iou[i][j] = uni ? static_cast<double>(inter) / uni : 0.0;
    }
  }
  std::vector<char> used(nb + 1, 0);
  std::function<int(int)> best = [&](int i) -> int {
    if (i > na) return 0;
    int r = best(i + 1);
    for (int j = 1; j <= nb; ++j) {
      if (used[j] || iou[i][j] <= 0.0 || iou[i][j] < thr) continue;
      used[j] = 1;
      r = std::max(r, 1 + best(i + 1));
      used[j] = 0;
    }
    return r;
  };
  return best(1);
}

}  // namespace

TEST_CASE("labeling validation and relabeling") {
  auto l = from_rows({{0, 5, 5}, {2, 0, 0}});
  CHECK_THROWS_AS(validate(l), DataError);
  const auto r = relabel_contiguous(l);
  CHECK(r == from_rows({{0, 1, 1}, {2, 0, 0}}));
  CHECK_NOTHROW(validate(r));
  CHECK(r.count() == 2);
  CHECK(same_partition(l, r));
  CHECK_FALSE(same_partition(r, from_rows({{0, 1, 2}, {2, 0, 0}})));
}

TEST_CASE("decoding: background, one blob, two blobs") {
  Fixture empty(16, 16, {});
  CHECK(empty.decode().count() == 0);

  Fixture one(16, 16, {{8, 7, 3.5}});
  const auto d1 = one.decode();
  CHECK(d1.count() == 1);
  CHECK(same_partition(d1, one.truth));

  Fixture two(24, 24, {{6, 6, 3.2}, {16, 15, 4.1}});
  const auto d2 = two.decode();
  CHECK(d2.count() == 2);
  CHECK(same_partition(d2, two.truth));
}

TEST_CASE("decoding drops tiny instances and rejects non-finite flow") {
  Fixture tiny(16, 16, {{8, 8, 1.0}});  // 5 px
  CHECK(tiny.decode().count() == 1);
  DecodeConfig strict;
  strict.min_size = 6;
  CHECK(tiny.decode(strict).count() == 0);
  tiny.u[0] = std::nan("");
  CHECK_THROWS_AS(tiny.decode(), NumericError);
}

TEST_CASE("decoding commutes with D4 up to relabeling") {
  Fixture f(32, 32, {{7, 8, 3.5}, {20, 9, 4.0}, {12, 22, 3.0}, {25, 24, 4.4}});
  Tensor<double> prob(1, 2, 32, 32), flow(1, 2, 32, 32);
  for (int i = 0; i < 32 * 32; ++i) {
    prob.plane(0, 1)[i] = f.prob[i];
    prob.plane(0, 0)[i] = 1.0 - f.prob[i];
    flow.plane(0, 0)[i] = f.u[i];
    flow.plane(0, 1)[i] = f.v[i];
  }
  const auto base = decode_item(prob, flow, 0);
  REQUIRE(base.count() == 4);
  Tensor<int32_t> base_t(1, 1, 32, 32);
  std::copy(base.labels.begin(), base.labels.end(), base_t.data());
  const std::vector<augment::ChannelKind> vec{augment::ChannelKind::kVector2,
                                              augment::ChannelKind::kVector2};
  for (const auto& g : augment::all_d4()) {
    CAPTURE(g.str());
    const auto d = decode_item(augment::apply_d4(g, prob), augment::apply_d4(g, flow, vec), 0);
    const auto moved = augment::apply_d4(g, base_t);
    InstanceLabeling expect(32, 32);
    std::copy(moved.values().begin(), moved.values().end(), expect.labels.begin());
    CHECK(same_partition(d, expect));
  }
}

TEST_CASE("matching: self-match, empty side, symmetry") {
  const auto a = from_rows({{1, 1, 0, 2}, {1, 1, 0, 2}, {0, 0, 0, 0}, {3, 3, 3, 0}});
  const auto self = match_instances(a, a);
  CHECK(self.tp == 3);
  CHECK(self.fn == 0);
  CHECK(self.fp == 0);
  for (const auto& p : self.matched_pairs) CHECK(p.iou == 1.0);
  const InstanceLabeling empty(4, 4);
  const auto r = match_instances(a, empty);
  CHECK(r.tp == 0);
  CHECK(r.fn == 3);
  CHECK(r.fp == 0);
  CHECK_THROWS_AS(match_instances(a, InstanceLabeling(4, 5)), ShapeError);
}

TEST_CASE("greedy matching agrees with an exhaustive oracle on random fixtures") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_labeling(rng, 16, 16, 4);
    const auto b = trial % 3 == 0 ? random_labeling(rng, 16, 16, 4) : jitter(a, rng);
    const auto r = match_instances(a, b);
    const int tp = optimal_tp(a, b, 0.5);
    CHECK(r.tp == tp);
    CHECK(r.fn == a.count() - tp);
    CHECK(r.fp == b.count() - tp);
    CHECK(match_instances(b, a).tp == r.tp);
    std::set<int> ids_a, ids_b;
    for (const auto& p : r.matched_pairs) {
      CHECK(p.iou >= 0.5);
      CHECK(ids_a.insert(p.id_a).second);
      CHECK(ids_b.insert(p.id_b).second);
    }
  }
}

TEST_CASE("FN rate") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_labeling(rng, 12, 12, 4);
    CHECK(fn_rate(x, x) == 0.0);
  }
  CHECK(fn_rate(InstanceLabeling(4, 4), InstanceLabeling(4, 4)) == 0.0);
  CHECK(FnCounts{19, 1}.rate() == 0.05);

  // Initial has three instances; current keeps two (IoU > 0.5) and drops one.
  const auto initial = from_rows({{1, 1, 0, 2, 2}, {1, 1, 0, 2, 2}, {0, 0, 0, 0, 0}, {3, 3, 0, 0, 0}});
  const auto current = from_rows({{1, 1, 0, 2, 2}, {1, 0, 0, 2, 2}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}});
  CHECK(fn_rate(initial, current) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Pooled across images: (0 + 1) / (2 + 1) rather than the mean of rates.
  const std::vector<InstanceLabeling> init{initial, from_rows({{1, 0}, {0, 0}})};
  const std::vector<InstanceLabeling> cur{current, from_rows({{0, 0}, {0, 0}})};
  const auto pooled = fn_counts(init, cur);
  CHECK(pooled.tp == 2);
  CHECK(pooled.fn == 2);
  CHECK(pooled.rate() == 0.5);
}

TEST_CASE("AP fixtures") {
  const auto truth = from_rows({{1, 1, 0, 2, 2}, {1, 1, 0, 2, 2}, {0, 0, 0, 0, 0}, {3, 3, 0, 4, 4}});
  CHECK(average_precision(truth, truth) == 1.0);
  CHECK(average_precision(InstanceLabeling(4, 5), truth) == 0.0);
  CHECK(average_precision(InstanceLabeling(4, 5), InstanceLabeling(4, 5)) == 1.0);

  const auto three = from_rows({{1, 1, 0, 2, 2}, {1, 1, 0, 2, 2}, {0, 0, 0, 0, 0}, {3, 3, 0, 0, 0}});
  // Matches instances 1 and 2, misses 3, adds one extra.
  const auto pred = from_rows({{1, 1, 0, 2, 2}, {1, 1, 0, 2, 2}, {0, 0, 0, 0, 0}, {0, 0, 0, 3, 3}});
  CHECK(average_precision(pred, three) == 0.5);

  const std::vector<InstanceLabeling> preds{pred, truth};
  const std::vector<InstanceLabeling> truths{three, truth};
  const auto rep = average_precision(preds, truths);
  CHECK(rep.per_image_ap == std::vector<double>{0.5, 1.0});
  CHECK(rep.mean_ap == 0.75);
  CHECK(rep.tp == 6);
  CHECK(rep.fp == 1);
  CHECK(rep.fn == 1);
}

TEST_CASE("AP at threshold 1.0 is 1 exactly for equal partitions") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 30; ++i) {
    const auto a = random_labeling(rng, 12, 12, 4);
    // Permute ids: same partition.
    InstanceLabeling b = a;
    const int k = a.count();
    for (auto& v : b.labels) {
      if (v > 0) v = k + 1 - v;
    }
    CHECK(average_precision(b, a, 1.0) == 1.0);
    const auto c = jitter(a, rng);
    CHECK((average_precision(c, a, 1.0) == 1.0) == same_partition(a, c));
  }
}

TEST_CASE("decode config JSON rejects unknown keys") {
  nlohmann::json j = DecodeConfig{};
  j["steps"] = 50;
  CHECK(j.get<DecodeConfig>().steps == 50);
  j["smoothing"] = 1;
  CHECK_THROWS_AS(j.get<DecodeConfig>(), ConfigError);
}
