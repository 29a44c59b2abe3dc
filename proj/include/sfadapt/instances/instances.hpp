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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfadapt/tensor.hpp"

namespace sfadapt::instances {

// H x W integer map, 0 = background, instances numbered 1..count().
struct InstanceLabeling {
  int height = 0;
  int width = 0;
  std::vector<int32_t> labels;

  InstanceLabeling() = default;
  InstanceLabeling(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}

  int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  int count() const;
  bool operator==(const InstanceLabeling&) const = default;
};

// Throws DataError unless ids are nonnegative and exactly {1..count()} occur.
void validate(const InstanceLabeling& l);
// Renumbers instances 1..K in raster order of first appearance.
InstanceLabeling relabel_contiguous(const InstanceLabeling& l);
// True if a and b partition pixels identically (ids may differ).
bool same_partition(const InstanceLabeling& a, const InstanceLabeling& b);

struct DecodeConfig {
  double prob_threshold = 0.5;
  int steps = 200;
  double step_size = 1.0;
  int bin_size = 2;
  int min_size = 4;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

// Flow-following decoding: every foreground pixel (prob > threshold) is
// advected along the bilinearly interpolated flow, clamped to the image.
// End points are binned on a coarse grid; 8-connected occupied bins form
// sinks, and pixels sharing a sink share an instance.
template <class T>
InstanceLabeling decode_instances(std::span<const T> cell_prob, std::span<const T> flow_u,
                                  std::span<const T> flow_v, int height, int width,
                                  const DecodeConfig& cfg = {});

// Decodes item n of a batch: class probabilities (N x C x H x W, channel 1 is
// "cell") and flow (N x 2 x H x W).
template <class T>
InstanceLabeling decode_item(const Tensor<T>& prob, const Tensor<T>& flow, int n,
                             const DecodeConfig& cfg = {});

template <class T>
std::vector<InstanceLabeling> decode_batch(const Tensor<T>& prob, const Tensor<T>& flow,
                                           const DecodeConfig& cfg = {});

struct MatchedPair {
  int32_t id_a;
  int32_t id_b;
  double iou;
};

struct MatchReport {
  int tp = 0;
  int fn = 0;  // unmatched in a
  int fp = 0;  // unmatched in b
  std::vector<MatchedPair> matched_pairs;
};

// IoU matrix (n_a x n_b, row-major) between the instances of a and b.
std::vector<double> iou_matrix(const InstanceLabeling& a, const InstanceLabeling& b);

// Greedy one-to-one matching in descending IoU order; pairs below the
// threshold are rejected.
MatchReport match_instances(const InstanceLabeling& a, const InstanceLabeling& b,
                            double iou_threshold = 0.5);

struct FnCounts {
  long tp = 0;
  long fn = 0;
  double rate() const { return tp + fn == 0 ? 0.0 : static_cast<double>(fn) / (tp + fn); }
};

// FN / (TP + FN) of `current` against the instances of `initial`; 0 when the
// initial prediction is empty.
double fn_rate(const InstanceLabeling& initial, const InstanceLabeling& current,
               double iou_threshold = 0.5);
// Pools TP and FN over the set before dividing.
FnCounts fn_counts(std::span<const InstanceLabeling> initial,
                   std::span<const InstanceLabeling> current, double iou_threshold = 0.5);

// TP / (TP + FP + FN); 1 when both are empty.
double average_precision(const InstanceLabeling& pred, const InstanceLabeling& truth,
                         double iou_threshold = 0.5);

struct ApReport {
  std::vector<MatchReport> per_image;
  std::vector<double> per_image_ap;
  double mean_ap = 0.0;  // mean of per-image AP
  long tp = 0, fp = 0, fn = 0;
};

ApReport average_precision(std::span<const InstanceLabeling> pred,
                           std::span<const InstanceLabeling> truth, double iou_threshold = 0.5);

}  // namespace sfadapt::instances
