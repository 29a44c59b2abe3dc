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

#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"

namespace sfadapt::train {

// Adam with decoupled weight decay (toward zero):
//   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
template <class T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
  };

  AdamW() = default;
  explicit AdamW(Options opts) : opts_(opts) {}

  void step(std::vector<model::Parameter<T>>& params, double lr);
  int64_t steps() const { return t_; }

 private:
  Options opts_{};
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warm-up from 0 to lr_peak over warmup_iters, then cosine decay to 0
// at total_iters.
double lr_at(int64_t iteration, int64_t total_iters, int64_t warmup_iters, double lr_peak);

// teacher <- alpha * teacher + (1 - alpha) * student, evaluated as
// teacher + (1 - alpha) * (student - teacher) so equal inputs are a fixed point.
template <class T>
void ema_update(std::span<T> teacher, std::span<const T> student, double alpha);

model::ParamSnapshot ema_update(const model::ParamSnapshot& teacher,
                                const model::ParamSnapshot& student, double alpha);

template <class T>
void ema_update(model::UNet<T>& teacher, const model::UNet<T>& student, double alpha);

}  // namespace sfadapt::train
