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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfadapt/instances/instances.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::stopping {

enum class StopMode { kFn, kEmb, kEither, kOff };
enum class EmbNormalization { kNone, kPerDimSqrt };
enum class Fired { kNone, kFn, kEmb };

std::string to_string(StopMode m);
std::string to_string(Fired f);
std::string to_string(EmbNormalization e);
StopMode parse_stop_mode(const std::string& s);
EmbNormalization parse_emb_normalization(const std::string& s);

struct StoppingConfig {
  double tau_fn = 0.05;
  double tau_emb = 0.5;
  StopMode mode = StopMode::kEither;
  EmbNormalization emb_normalization = EmbNormalization::kNone;

  void validate() const;
};

void to_json(nlohmann::json& j, const StoppingConfig& c);
void from_json(const nlohmann::json& j, StoppingConfig& c);

struct StoppingRecord {
  int64_t iteration = 0;
  double fn_rate = 0.0;
  double d_emb = 0.0;
  double mean_confidence = 0.0;  // diagnostic only
  double tta_variance = 0.0;     // diagnostic only
  std::optional<double> oracle_ap;
  bool fn_exceeded = false;
  bool emb_exceeded = false;
  Fired fired = Fired::kNone;
};

// fn fires when fn_rate > tau_fn, emb when d_emb > tau_emb; under kEither a
// simultaneous crossing reports fn.
Fired decide(double fn_rate, double d_emb, const StoppingConfig& cfg);

// Mean over images of ||current_i - initial_i||_2, for N x D embeddings;
// kPerDimSqrt divides each norm by sqrt(D). Throws on an empty set.
template <class T>
double embedding_distance(const Tensor<T>& current, const Tensor<T>& initial,
                          EmbNormalization norm = EmbNormalization::kNone);

template <class T>
double embedding_distance(const model::UNet<T>& current, const model::UNet<T>& initial,
                          const Tensor<T>& images,
                          EmbNormalization norm = EmbNormalization::kNone);

struct Diagnostics {
  double mean_confidence = 0.0;  // mean max-class probability
  double tta_variance = 0.0;     // mean flow spread over the D4 views
};

template <class T>
Diagnostics diagnostics(const model::UNet<T>& net, const Tensor<T>& images);

// Observer holding the initial model's decoded instances and embeddings on
// the validation images, computed on first use.
class StoppingEvaluator {
 public:
  StoppingEvaluator(const model::UNet<float>& initial, Tensor<float> validation_images,
                    StoppingConfig cfg, instances::DecodeConfig decode = {});

  StoppingRecord evaluate(const model::UNet<float>& current, int64_t iteration);
  const StoppingConfig& config() const { return cfg_; }
  bool cached() const { return cache_.has_value(); }
  void ensure_cache();

 private:
  struct Cache {
    std::vector<instances::InstanceLabeling> labelings;
    Tensor<float> embeddings;
  };

  model::UNet<float> initial_;
  Tensor<float> images_;
  StoppingConfig cfg_;
  instances::DecodeConfig decode_;
  std::optional<Cache> cache_;
};

// Post-hoc analysis of a series of records (one run, iteration order).

enum class Criterion { kFn, kEmb };

// Index of the last record before the first whose metric exceeds tau; the
// last index when the metric never exceeds it.
std::size_t stop_index(std::span<const StoppingRecord> records, Criterion c, double tau);

// (ap_stop - ap_initial) / (ap_max - ap_initial); 1 when there is no gain to
// capture and ap_stop >= ap_initial.
double capture_fraction(double ap_initial, double ap_max, double ap_stop);

// Capture fraction of the checkpoint selected by (c, tau); requires oracle AP
// on every record, with records[0] the initial model.
double capture_for(std::span<const StoppingRecord> records, Criterion c, double tau);

// Picks the tau (among the observed metric values of the calibration runs)
// maximizing the mean capture fraction; ties go to the smaller tau.
double calibrate_threshold(std::span<const std::vector<StoppingRecord>> runs, Criterion c);

}  // namespace sfadapt::stopping
