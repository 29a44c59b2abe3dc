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

#include <nlohmann/json.hpp>

#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/pseudolabel/pseudolabel.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::objective {

struct LossConfig {
  double lambda_bal = 0.5;
  double lambda_l2sp = 1e-4;
  double weight_decay = 1e-3;  // applied by the optimizer, decoupled
  bool l2sp_exclude_biases = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// Mask fractions are the share of pixels kept (mask = 1).
struct LossBreakdown {
  double ce_term = 0.0;
  double mse_term = 0.0;
  double l2sp_term = 0.0;
  double total = 0.0;
  double mask_frac_p = 0.0;
  double mask_frac_f = 0.0;
};

template <class T>
struct ConsistencyResult {
  LossBreakdown loss;  // l2sp_term = 0, total = ce + lambda_bal * mse
  Tensor<T> d_logits;
  Tensor<T> d_flow;
};

// Masked cross-entropy against hard labels plus lambda_bal times masked MSE
// on the flow, each averaged over its kept pixels:
//   ce  = sum(CE * M_p) / max(sum M_p, 1)
//   mse = sum((f_s - f_t)^2 * M_f) / max(sum M_f, 1)   (M_f per component)
// Pseudo-labels are constants; gradients are w.r.t. the student outputs only.
template <class T>
ConsistencyResult<T> consistency_loss(const Tensor<T>& logits, const Tensor<T>& flow,
                                      const Tensor<int32_t>& labels,
                                      const Tensor<T>& target_flow,
                                      const pseudolabel::Masks& masks, const LossConfig& cfg);

template <class T>
ConsistencyResult<T> consistency_loss(const model::SegmentationOutput<T>& student,
                                      const pseudolabel::PseudoLabelBundle<T>& pseudo,
                                      const LossConfig& cfg) {
  return consistency_loss(student.class_logits, student.flow, pseudo.labels, pseudo.flow,
                          pseudo.masks, cfg);
}

// lambda * sum_i (w_i - w0_i)^2 over all entries (optionally skipping
// entries whose name ends in "bias").
double l2sp_penalty(const model::ParamSnapshot& current, const model::ParamSnapshot& initial,
                    double lambda, bool exclude_biases = false);

// d/dw of l2sp_penalty: 2 lambda (w - w0), zero for excluded entries.
model::ParamSnapshot l2sp_gradient(const model::ParamSnapshot& current,
                                   const model::ParamSnapshot& initial, double lambda,
                                   bool exclude_biases = false);

// Adds the L2-SP gradient to the network's parameter gradients and returns
// the penalty value.
template <class T>
double add_l2sp_gradient(model::UNet<T>& net, const model::ParamSnapshot& initial,
                         double lambda, bool exclude_biases = false);

LossBreakdown combine(LossBreakdown consistency, double l2sp_term, const LossConfig& cfg);

template <class T>
LossBreakdown total_loss(const model::SegmentationOutput<T>& student,
                         const pseudolabel::PseudoLabelBundle<T>& pseudo,
                         const model::ParamSnapshot& current,
                         const model::ParamSnapshot& initial, const LossConfig& cfg);

}  // namespace sfadapt::objective
