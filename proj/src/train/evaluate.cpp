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

#include "sfadapt/train/evaluate.hpp"

#include <algorithm>

#include "sfadapt/errors.hpp"

namespace sfadapt::train {

std::vector<instances::InstanceLabeling> predict_instances(const model::UNet<float>& net,
                                                           const Tensor<float>& images,
                                                           const instances::DecodeConfig& decode,
                                                           int chunk) {
  std::vector<instances::InstanceLabeling> out;
  out.reserve(static_cast<std::size_t>(images.n()));
  chunk = std::max(chunk, 1);
  for (int first = 0; first < images.n(); first += chunk) {
    const int count = std::min(chunk, images.n() - first);
    const auto pred = net.forward(slice_items(images, first, count));
    auto part = instances::decode_batch(model::softmax_channels(pred.class_logits), pred.flow, decode);
    for (auto& l : part) out.push_back(std::move(l));
  }
  return out;
}

instances::ApReport evaluate_ap(const model::UNet<float>& net, const synthdata::Dataset& data,
                                const instances::DecodeConfig& decode, double iou_threshold) {
  if (data.empty()) throw DataError("evaluate_ap: empty dataset");
  if (!data.labeled()) throw DataError("evaluate_ap: dataset has no instance masks");
  const auto pred = predict_instances(net, data.images(), decode);
  const auto truth = data.labelings();
  return instances::average_precision(pred, truth, iou_threshold);
}

}  // namespace sfadapt::train
