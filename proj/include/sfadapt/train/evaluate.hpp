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

#include <vector>

#include "sfadapt/instances/instances.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/synthdata/synthdata.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::train {

// Eval-mode forward plus decoding, in chunks of `chunk` images.
std::vector<instances::InstanceLabeling> predict_instances(
    const model::UNet<float>& net, const Tensor<float>& images,
    const instances::DecodeConfig& decode = {}, int chunk = 32);

// AP@iou_threshold of the network's decoded predictions against the labeled
// dataset's instances.
instances::ApReport evaluate_ap(const model::UNet<float>& net, const synthdata::Dataset& data,
                                const instances::DecodeConfig& decode = {},
                                double iou_threshold = 0.5);

}  // namespace sfadapt::train
