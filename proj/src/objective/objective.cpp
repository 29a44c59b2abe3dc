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

#include "sfadapt/objective/objective.hpp"

#include <cmath>
#include <string_view>

#include "sfadapt/errors.hpp"

namespace sfadapt::objective {

namespace {

bool is_bias(std::string_view name) {
  constexpr std::string_view kSuffix = "bias";
  return name.size() >= kSuffix.size() &&
         name.substr(name.size() - kSuffix.size()) == kSuffix;
}

void check_binary(const Tensor<uint8_t>& m, const char* what) {
  for (uint8_t v : m.values()) {
    if (v > 1) throw Error(std::string("consistency_loss: non-binary mask ") + what);
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda_bal >= 0.0) || !(lambda_l2sp >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("loss config: weights must be nonnegative");
  }
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"lambda_bal", c.lambda_bal},
       {"lambda_l2sp", c.lambda_l2sp},
       {"weight_decay", c.weight_decay},
       {"l2sp_exclude_biases", c.l2sp_exclude_biases}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "lambda_bal") {
      c.lambda_bal = v.get<double>();
    } else if (key == "lambda_l2sp") {
      c.lambda_l2sp = v.get<double>();
    } else if (key == "weight_decay") {
      c.weight_decay = v.get<double>();
    } else if (key == "l2sp_exclude_biases") {
      c.l2sp_exclude_biases = v.get<bool>();
    } else {
      throw ConfigError("loss config: unknown key '" + key + "'");
    }
  }
  c.validate();
}

template <class T>
ConsistencyResult<T> consistency_loss(const Tensor<T>& logits, const Tensor<T>& flow,
                                      const Tensor<int32_t>& labels,
                                      const Tensor<T>& target_flow,
                                      const pseudolabel::Masks& masks, const LossConfig& cfg) {
  const Shape4 s = logits.shape();
  const Shape4 px{s.n, 1, s.h, s.w};
  const Shape4 fs{s.n, 2, s.h, s.w};
  if (labels.shape() != px || masks.p.shape() != px || flow.shape() != fs ||
      target_flow.shape() != fs || masks.f.shape() != fs) {
    throw ShapeError("consistency_loss: shape mismatch (logits " + s.str() + ", flow " +
                     flow.shape().str() + ", labels " + labels.shape().str() + ", target " +
                     target_flow.shape().str() + ", masks " + masks.p.shape().str() + "/" +
                     masks.f.shape().str() + ")");
  }
  check_binary(masks.p, "M_p");
  check_binary(masks.f, "M_f");

  ConsistencyResult<T> r;
  r.d_logits = Tensor<T>(s);
  r.d_flow = Tensor<T>(fs);
  const std::size_t hw = px.plane();

  double kept_p = 0.0, kept_f = 0.0;
  for (uint8_t v : masks.p.values()) kept_p += v;
  for (uint8_t v : masks.f.values()) kept_f += v;
  const double norm_p = std::max(kept_p, 1.0);
  const double norm_f = std::max(kept_f, 1.0);

  double ce = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(s.c));
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      if (!masks.p.plane(n, 0)[i]) continue;
      const int y = labels.plane(n, 0)[i];
      if (y < 0 || y >= s.c) throw Error("consistency_loss: label out of range");
      double mx = logits.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max<double>(mx, logits.plane(n, c)[i]);
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        prob[c] = std::exp(logits.plane(n, c)[i] - mx);
        z += prob[c];
      }
      ce += std::log(z) + mx - logits.plane(n, y)[i];
      for (int c = 0; c < s.c; ++c) {
        const double g = prob[c] / z - (c == y ? 1.0 : 0.0);
        r.d_logits.plane(n, c)[i] = static_cast<T>(g / norm_p);
      }
    }
  }

  double mse = 0.0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!masks.f.data()[i]) continue;
    const double d = static_cast<double>(flow.data()[i]) - target_flow.data()[i];
    mse += d * d;
    r.d_flow.data()[i] = static_cast<T>(cfg.lambda_bal * 2.0 * d / norm_f);
  }

  r.loss.ce_term = ce / norm_p;
  r.loss.mse_term = mse / norm_f;
  r.loss.total = r.loss.ce_term + cfg.lambda_bal * r.loss.mse_term;
  r.loss.mask_frac_p = masks.p.empty() ? 0.0 : kept_p / static_cast<double>(masks.p.size());
  r.loss.mask_frac_f = masks.f.empty() ? 0.0 : kept_f / static_cast<double>(masks.f.size());
  return r;
}

double l2sp_penalty(const model::ParamSnapshot& current, const model::ParamSnapshot& initial,
                    double lambda, bool exclude_biases) {
  model::check_compatible(initial, current);
  double sum = 0.0;
  for (std::size_t e = 0; e < current.entries.size(); ++e) {
    if (exclude_biases && is_bias(current.entries[e].name)) continue;
    const auto& w = current.entries[e].values;
    const auto& w0 = initial.entries[e].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - w0[i];
      sum += d * d;
    }
  }
  return lambda * sum;
}

model::ParamSnapshot l2sp_gradient(const model::ParamSnapshot& current,
                                   const model::ParamSnapshot& initial, double lambda,
                                   bool exclude_biases) {
  model::check_compatible(initial, current);
  model::ParamSnapshot g = current;
  for (std::size_t e = 0; e < g.entries.size(); ++e) {
    auto& v = g.entries[e].values;
    const bool skip = exclude_biases && is_bias(g.entries[e].name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = skip ? 0.0 : 2.0 * lambda * (current.entries[e].values[i] - initial.entries[e].values[i]);
    }
  }
  return g;
}

template <class T>
double add_l2sp_gradient(model::UNet<T>& net, const model::ParamSnapshot& initial,
                         double lambda, bool exclude_biases) {
  auto& params = net.parameters();
  if (params.size() != initial.entries.size()) {
    throw ArchitectureMismatch("L2-SP: initial snapshot has " +
                               std::to_string(initial.entries.size()) + " entries, network has " +
                               std::to_string(params.size()));
  }
  double sum = 0.0;
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& p = params[e];
    const auto& w0 = initial.entries[e].values;
    if (p.name != initial.entries[e].name || p.value.size() != w0.size()) {
      throw ArchitectureMismatch("L2-SP: entry mismatch at '" + p.name + "'");
    }
    if (exclude_biases && is_bias(p.name)) continue;
    for (std::size_t i = 0; i < w0.size(); ++i) {
      const double d = static_cast<double>(p.value[i]) - w0[i];
      sum += d * d;
      if (lambda != 0.0) p.grad[i] += static_cast<T>(2.0 * lambda * d);
    }
  }
  return lambda * sum;
}

LossBreakdown combine(LossBreakdown consistency, double l2sp_term, const LossConfig& cfg) {
  consistency.l2sp_term = l2sp_term;
  consistency.total = consistency.ce_term + cfg.lambda_bal * consistency.mse_term + l2sp_term;
  return consistency;
}

template <class T>
LossBreakdown total_loss(const model::SegmentationOutput<T>& student,
                         const pseudolabel::PseudoLabelBundle<T>& pseudo,
                         const model::ParamSnapshot& current,
                         const model::ParamSnapshot& initial, const LossConfig& cfg) {
  const auto c = consistency_loss(student, pseudo, cfg);
  return combine(c.loss, l2sp_penalty(current, initial, cfg.lambda_l2sp, cfg.l2sp_exclude_biases),
                 cfg);
}

#define SFADAPT_INSTANTIATE(T)                                                                 \
  template ConsistencyResult<T> consistency_loss(const Tensor<T>&, const Tensor<T>&,           \
                                                 const Tensor<int32_t>&, const Tensor<T>&,     \
                                                 const pseudolabel::Masks&, const LossConfig&); \
  template double add_l2sp_gradient(model::UNet<T>&, const model::ParamSnapshot&, double,      \
                                    bool);                                                     \
  template LossBreakdown total_loss(const model::SegmentationOutput<T>&,                       \
                                    const pseudolabel::PseudoLabelBundle<T>&,                  \
                                    const model::ParamSnapshot&, const model::ParamSnapshot&,  \
                                    const LossConfig&);

SFADAPT_INSTANTIATE(float)
SFADAPT_INSTANTIATE(double)

#undef SFADAPT_INSTANTIATE

}  // namespace sfadapt::objective
