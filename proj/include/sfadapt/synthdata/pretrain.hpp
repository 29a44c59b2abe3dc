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
#include <functional>

#include <nlohmann/json.hpp>

#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/objective/objective.hpp"
#include "sfadapt/synthdata/synthdata.hpp"

namespace sfadapt::synthdata {

// Supervised source training producing the pretrained weights.
struct PretrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr_peak = 3e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 1e-4;
  double lambda_bal = 0.5;
  bool d4_augment = true;  // one random D4 element per batch
  uint64_t seed = 0;
  double gate_ap = 0.8;

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

struct PretrainProgress {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Trains `net` in place with CE + lambda_bal * MSE against the dataset's
// targets and returns its snapshot. Zero epochs leave `net` untouched.
model::ParamSnapshot pretrain_source(model::UNet<float>& net, const Dataset& train,
                                     const PretrainConfig& cfg,
                                     const std::function<void(const PretrainProgress&)>& on_epoch = {});

// Ground-truth class labels (N x 1 x H x W, 1 on instances).
Tensor<int32_t> class_labels(const Dataset& data);

}  // namespace sfadapt::synthdata
