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
#include <span>
#include <vector>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::pseudolabel {

// Per-pixel class probabilities (N x C x H x W) and flow (N x 2 x H x W).
template <class T>
struct DensePrediction {
  Tensor<T> prob;
  Tensor<T> flow;
};

template <class T>
using Predictor = std::function<DensePrediction<T>(const Tensor<T>&)>;

// Eval-mode forward followed by a channel softmax.
template <class T>
Predictor<T> model_predictor(const model::UNet<T>& net);

template <class T>
struct TtaPrediction {
  std::vector<DensePrediction<T>> aligned;  // one per transform, in input frame
  DensePrediction<T> mean;
};

// Predicts on g(x) for every g, maps each prediction back with g^-1 (flow as
// a vector field) and averages probabilities and flows.
template <class T>
TtaPrediction<T> tta_predict(const Predictor<T>& predict, const Tensor<T>& images,
                             std::span<const augment::D4Element> transforms);

template <class T>
TtaPrediction<T> tta_predict(const Predictor<T>& predict, const Tensor<T>& images) {
  const auto all = augment::all_d4();
  return tta_predict(predict, images, std::span<const augment::D4Element>(all));
}

template <class T>
struct Uncertainty {
  Tensor<T> u_cls;        // N x 1 x H x W, 1 - max averaged probability
  Tensor<T> u_flow;       // N x 1 x H x W, mean of the two component stds
  Tensor<T> u_flow_comp;  // N x 2 x H x W, population std per component
};

// Throws Error with fewer than two predictions.
template <class T>
Uncertainty<T> compute_uncertainty(std::span<const DensePrediction<T>> aligned);

// Single-prediction variant: u_cls from the probabilities, zero flow spread.
template <class T>
Uncertainty<T> single_view_uncertainty(const DensePrediction<T>& pred);

// Moving average of a percentile of the uncertainty maps.
struct UncertaintyThresholdState {
  double q_cls = 0.0;
  double q_flow = 0.0;     // pooled, or u component when per_component
  double q_flow_v = 0.0;   // v component, per_component only
  double momentum = 0.95;
  double percentile = 80.0;
  bool per_component = false;
  bool initialized = false;
};

// Linear-interpolation percentile (p in [0, 100]) of all values.
template <class T>
double percentile(std::span<const T> values, double p);

template <class T>
UncertaintyThresholdState update_thresholds(UncertaintyThresholdState state,
                                            const Uncertainty<T>& u);

struct Masks {
  Tensor<uint8_t> p;  // N x 1 x H x W
  Tensor<uint8_t> f;  // N x 2 x H x W, one mask per flow component
};

// M = [u <= q]. Throws Error if the state is uninitialized.
template <class T>
Masks build_masks(const Uncertainty<T>& u, const UncertaintyThresholdState& state);

template <class T>
struct PseudoLabelBundle {
  Tensor<int32_t> labels;  // N x 1 x H x W, argmax of the averaged probabilities
  Tensor<T> prob;          // averaged probabilities
  Tensor<T> flow;          // averaged flow
  Uncertainty<T> uncertainty;
  Masks masks;

  double mask_fraction_p() const;
  double mask_fraction_f() const;
};

struct PseudoLabelOptions {
  bool teacher_tta = true;
  bool confidence_filtering = true;
};

// Teacher side of one training step. Updates `state` when confidence
// filtering is on; otherwise both masks are all ones.
template <class T>
PseudoLabelBundle<T> make_pseudo_labels(const Predictor<T>& teacher, const Tensor<T>& images,
                                        const PseudoLabelOptions& opts,
                                        UncertaintyThresholdState& state);

}  // namespace sfadapt::pseudolabel
