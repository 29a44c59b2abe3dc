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
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfadapt/augment/strong.hpp"
#include "sfadapt/instances/instances.hpp"
#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/objective/objective.hpp"
#include "sfadapt/pseudolabel/pseudolabel.hpp"
#include "sfadapt/stopping/stopping.hpp"
#include "sfadapt/train/optim.hpp"

namespace sfadapt::train {

struct AblationFlags {
  bool confidence_filtering = true;
  bool teacher_tta = true;
  bool l2sp = true;
  bool student_augmentations = true;

  bool operator==(const AblationFlags&) const = default;
};

void to_json(nlohmann::json& j, const AblationFlags& a);
void from_json(const nlohmann::json& j, AblationFlags& a);

enum class EvalModel { kStudent, kTeacher };

struct AdaptConfig {
  int64_t iterations = 2000;
  int batch_size = 8;
  double lr_peak = 1e-4;
  double warmup_fraction = 0.05;
  double ema_alpha = 0.99;
  int64_t eval_every = 100;
  AblationFlags ablation;
  uint64_t seed = 0;

  double threshold_percentile = 80.0;
  double threshold_momentum = 0.95;
  bool flow_threshold_per_component = false;
  // Student view also gets a random D4 element (pseudo-labels follow it).
  bool student_d4 = false;
  EvalModel eval_model = EvalModel::kStudent;

  objective::LossConfig loss;
  stopping::StoppingConfig stopping;
  augment::StrongAugConfig strong_aug;
  instances::DecodeConfig decode;

  int64_t warmup_iters() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const AdaptConfig& c);
void from_json(const nlohmann::json& j, AdaptConfig& c);

struct AdaptData {
  Tensor<float> train_images;       // unlabeled target stream
  Tensor<float> validation_images;  // unlabeled, stopping metrics only
  // Optional labeled test split for the oracle curve; never used for training
  // or stopping decisions.
  Tensor<float> test_images;
  std::vector<instances::InstanceLabeling> test_truth;

  bool has_oracle() const { return !test_truth.empty(); }
};

struct StepLog {
  int64_t iteration = 0;  // steps completed, 1-based
  double lr = 0.0;
  objective::LossBreakdown loss;
};

struct AdaptResult {
  model::ParamSnapshot final_student;
  model::ParamSnapshot final_teacher;
  // Weights of the evaluated model at the last evaluation before a stopping
  // criterion fired; the final weights when nothing fired.
  model::ParamSnapshot stopped;
  int64_t stopped_iteration = 0;
  bool halted = false;
  std::vector<stopping::StoppingRecord> history;
  std::vector<StepLog> steps;
};

// Owns the mutable training state: student, teacher, optimizer, threshold
// state and RNG streams.
class Adapter {
 public:
  Adapter(AdaptConfig cfg, const model::ParamSnapshot& init, AdaptData data);

  // One optimization step; returns its log row. Throws NumericError on a
  // non-finite loss.
  StepLog step();
  // Stopping metrics (and the oracle AP when test labels exist) of the
  // evaluated model at the current iteration.
  stopping::StoppingRecord evaluate();

  using EvalCallback = std::function<void(const stopping::StoppingRecord&,
                                          const model::UNet<float>& evaluated)>;
  using StepCallback = std::function<void(const StepLog&)>;
  AdaptResult run(const EvalCallback& on_eval = {}, const StepCallback& on_step = {});

  int64_t iteration() const { return iteration_; }
  const model::UNet<float>& student() const { return student_; }
  const model::UNet<float>& teacher() const { return teacher_; }
  const model::UNet<float>& evaluated() const;
  const pseudolabel::UncertaintyThresholdState& thresholds() const { return thresholds_; }

 private:
  Tensor<float> next_batch();

  AdaptConfig cfg_;
  AdaptData data_;
  model::ParamSnapshot theta0_;
  model::UNet<float> student_;
  model::UNet<float> teacher_;
  AdamW<float> opt_;
  pseudolabel::UncertaintyThresholdState thresholds_;
  stopping::StoppingEvaluator evaluator_;
  std::mt19937_64 batch_rng_;
  std::mt19937_64 aug_rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  int64_t iteration_ = 0;
};

// Convenience wrapper around Adapter::run().
AdaptResult adapt(const AdaptConfig& cfg, const model::ParamSnapshot& init, AdaptData data);

// One CSV with a `kind` column: "step" rows carry the loss breakdown, "eval"
// rows the stopping metrics. Fixed formatting, so identical runs give
// identical bytes.
std::string metrics_csv(std::span<const StepLog> steps,
                        std::span<const stopping::StoppingRecord> history);
void write_metrics_csv(const std::filesystem::path& path, std::span<const StepLog> steps,
                       std::span<const stopping::StoppingRecord> history);

}  // namespace sfadapt::train
