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

#include "sfadapt/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "sfadapt/errors.hpp"

namespace sfadapt::train {

template <class T>
void AdamW<T>::step(std::vector<model::Parameter<T>>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ArchitectureMismatch("AdamW: parameter set changed");
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      if (lr == 0.0) continue;
      const double w = p.value[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps) + opts_.weight_decay * w;
      p.value[i] = static_cast<T>(w - lr * update);
    }
  }
}

double lr_at(int64_t iteration, int64_t total_iters, int64_t warmup_iters, double lr_peak) {
  if (iteration < 0 || iteration > total_iters || warmup_iters < 0) {
    throw ConfigError("lr_at: iteration " + std::to_string(iteration) + " outside [0, " +
                      std::to_string(total_iters) + "]");
  }
  if (iteration < warmup_iters) {
    return lr_peak * static_cast<double>(iteration) / static_cast<double>(warmup_iters);
  }
  const int64_t span = total_iters - warmup_iters;
  if (span <= 0) return lr_peak;
  const double progress = static_cast<double>(iteration - warmup_iters) / static_cast<double>(span);
  return lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <class T>
void ema_update(std::span<T> teacher, std::span<const T> student, double alpha) {
  if (teacher.size() != student.size()) throw ArchitectureMismatch("ema_update: size mismatch");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ema_update: alpha must be in (0, 1)");
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double t = teacher[i];
    teacher[i] = static_cast<T>(t + beta * (static_cast<double>(student[i]) - t));
  }
}

model::ParamSnapshot ema_update(const model::ParamSnapshot& teacher,
                                const model::ParamSnapshot& student, double alpha) {
  model::check_compatible(teacher, student);
  model::ParamSnapshot out = teacher;
  for (std::size_t e = 0; e < out.entries.size(); ++e) {
    ema_update<double>(out.entries[e].values, student.entries[e].values, alpha);
  }
  return out;
}

template <class T>
void ema_update(model::UNet<T>& teacher, const model::UNet<T>& student, double alpha) {
  auto& tp = teacher.parameters();
  const auto& sp = student.parameters();
  if (tp.size() != sp.size()) throw ArchitectureMismatch("ema_update: parameter count mismatch");
  for (std::size_t k = 0; k < tp.size(); ++k) {
    if (tp[k].name != sp[k].name) throw ArchitectureMismatch("ema_update: '" + tp[k].name + "' vs '" + sp[k].name + "'");
    ema_update<T>(tp[k].value, sp[k].value, alpha);
  }
}

template class AdamW<float>;
template class AdamW<double>;
template void ema_update(std::span<float>, std::span<const float>, double);
template void ema_update(std::span<double>, std::span<const double>, double);
template void ema_update(model::UNet<float>&, const model::UNet<float>&, double);
template void ema_update(model::UNet<double>&, const model::UNet<double>&, double);

}  // namespace sfadapt::train
