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

#include "sfadapt/stopping/stopping.hpp"

#include <algorithm>
#include <cmath>

#include "sfadapt/errors.hpp"
#include "sfadapt/pseudolabel/pseudolabel.hpp"

namespace sfadapt::stopping {

std::string to_string(StopMode m) {
  switch (m) {
    case StopMode::kFn: return "fn";
    case StopMode::kEmb: return "emb";
    case StopMode::kEither: return "either";
    case StopMode::kOff: return "off";
  }
  return "?";
}

std::string to_string(Fired f) {
  switch (f) {
    case Fired::kNone: return "none";
    case Fired::kFn: return "fn";
    case Fired::kEmb: return "emb";
  }
  return "?";
}

std::string to_string(EmbNormalization e) {
  return e == EmbNormalization::kNone ? "none" : "per_dim_sqrt";
}

StopMode parse_stop_mode(const std::string& s) {
  if (s == "fn") return StopMode::kFn;
  if (s == "emb") return StopMode::kEmb;
  if (s == "either") return StopMode::kEither;
  if (s == "off") return StopMode::kOff;
  throw ConfigError("unknown stopping mode '" + s + "' (fn|emb|either|off)");
}

EmbNormalization parse_emb_normalization(const std::string& s) {
  if (s == "none") return EmbNormalization::kNone;
  if (s == "per_dim_sqrt") return EmbNormalization::kPerDimSqrt;
  throw ConfigError("unknown embedding normalization '" + s + "' (none|per_dim_sqrt)");
}

void StoppingConfig::validate() const {
  if (!(tau_fn > 0.0) || !(tau_emb > 0.0)) throw ConfigError("stopping: thresholds must be > 0");
}

void to_json(nlohmann::json& j, const StoppingConfig& c) {
  j = {{"tau_fn", c.tau_fn},
       {"tau_emb", c.tau_emb},
       {"mode", to_string(c.mode)},
       {"emb_normalization", to_string(c.emb_normalization)}};
}

void from_json(const nlohmann::json& j, StoppingConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "tau_fn") c.tau_fn = v.get<double>();
    else if (key == "tau_emb") c.tau_emb = v.get<double>();
    else if (key == "mode") c.mode = parse_stop_mode(v.get<std::string>());
    else if (key == "emb_normalization") c.emb_normalization = parse_emb_normalization(v.get<std::string>());
    else throw ConfigError("stopping config: unknown key '" + key + "'");
  }
  c.validate();
}

Fired decide(double fn_rate, double d_emb, const StoppingConfig& cfg) {
  const bool fn = fn_rate > cfg.tau_fn;
  const bool emb = d_emb > cfg.tau_emb;
  switch (cfg.mode) {
    case StopMode::kFn: return fn ? Fired::kFn : Fired::kNone;
    case StopMode::kEmb: return emb ? Fired::kEmb : Fired::kNone;
    case StopMode::kEither: return fn ? Fired::kFn : (emb ? Fired::kEmb : Fired::kNone);
    case StopMode::kOff: return Fired::kNone;
  }
  return Fired::kNone;
}

template <class T>
double embedding_distance(const Tensor<T>& current, const Tensor<T>& initial,
                          EmbNormalization norm) {
  if (current.shape() != initial.shape()) {
    throw ShapeError("embedding_distance: " + current.shape().str() + " vs " + initial.shape().str());
  }
  if (current.n() == 0) throw Error("embedding_distance: empty validation set");
  const std::size_t d = current.size() / static_cast<std::size_t>(current.n());
  const double scale = norm == EmbNormalization::kPerDimSqrt ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
  double sum = 0.0;
  for (int n = 0; n < current.n(); ++n) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = static_cast<double>(current.data()[n * d + i]) - initial.data()[n * d + i];
      ss += diff * diff;
    }
    sum += std::sqrt(ss) * scale;
  }
  return sum / current.n();
}

template <class T>
double embedding_distance(const model::UNet<T>& current, const model::UNet<T>& initial,
                          const Tensor<T>& images, EmbNormalization norm) {
  if (images.n() == 0) throw Error("embedding_distance: empty validation set");
  return embedding_distance(model::extract_embedding(current, images),
                            model::extract_embedding(initial, images), norm);
}

template <class T>
Diagnostics diagnostics(const model::UNet<T>& net, const Tensor<T>& images) {
  Diagnostics d;
  const auto predict = pseudolabel::model_predictor(net);
  const auto tta = pseudolabel::tta_predict(predict, images);
  // aligned[0] is the identity view, i.e. the plain prediction.
  const Tensor<T>& prob = tta.aligned.front().prob;
  const std::size_t hw = prob.shape().plane();
  double conf = 0.0;
  for (int n = 0; n < prob.n(); ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = prob.plane(n, 0)[i];
      for (int c = 1; c < prob.c(); ++c) mx = std::max(mx, prob.plane(n, c)[i]);
      conf += mx;
    }
  }
  d.mean_confidence = conf / static_cast<double>(static_cast<std::size_t>(prob.n()) * hw);
  const auto u = pseudolabel::compute_uncertainty<T>(tta.aligned);
  double var = 0.0;
  for (T v : u.u_flow.values()) var += v;
  d.tta_variance = var / static_cast<double>(u.u_flow.size());
  return d;
}

StoppingEvaluator::StoppingEvaluator(const model::UNet<float>& initial,
                                     Tensor<float> validation_images, StoppingConfig cfg,
                                     instances::DecodeConfig decode)
    : initial_(initial), images_(std::move(validation_images)), cfg_(cfg), decode_(decode) {
  cfg_.validate();
  if (images_.n() == 0) throw DataError("stopping: empty validation set");
}

void StoppingEvaluator::ensure_cache() {
  if (cache_) return;
  const auto out = initial_.forward(images_);
  Cache c;
  c.labelings = instances::decode_batch(model::softmax_channels(out.class_logits), out.flow, decode_);
  c.embeddings = out.bottleneck;
  cache_ = std::move(c);
}

StoppingRecord StoppingEvaluator::evaluate(const model::UNet<float>& current, int64_t iteration) {
  ensure_cache();
  const auto out = current.forward(images_);
  const auto labelings =
      instances::decode_batch(model::softmax_channels(out.class_logits), out.flow, decode_);
  StoppingRecord r;
  r.iteration = iteration;
  r.fn_rate = instances::fn_counts(cache_->labelings, labelings).rate();
  r.d_emb = embedding_distance(out.bottleneck, cache_->embeddings, cfg_.emb_normalization);
  const Diagnostics d = diagnostics(current, images_);
  r.mean_confidence = d.mean_confidence;
  r.tta_variance = d.tta_variance;
  r.fn_exceeded = r.fn_rate > cfg_.tau_fn;
  r.emb_exceeded = r.d_emb > cfg_.tau_emb;
  r.fired = decide(r.fn_rate, r.d_emb, cfg_);
  return r;
}

namespace {

double metric(const StoppingRecord& r, Criterion c) {
  return c == Criterion::kFn ? r.fn_rate : r.d_emb;
}

}  // namespace

std::size_t stop_index(std::span<const StoppingRecord> records, Criterion c, double tau) {
  if (records.empty()) throw Error("stop_index: no records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (metric(records[i], c) > tau) return i == 0 ? 0 : i - 1;
  }
  return records.size() - 1;
}

double capture_fraction(double ap_initial, double ap_max, double ap_stop) {
  const double gain = ap_max - ap_initial;
  if (gain <= 0.0) return ap_stop >= ap_initial ? 1.0 : 0.0;
  return (ap_stop - ap_initial) / gain;
}

double capture_for(std::span<const StoppingRecord> records, Criterion c, double tau) {
  if (records.empty()) throw Error("capture_for: no records");
  double ap_max = -1.0;
  for (const auto& r : records) {
    if (!r.oracle_ap) throw Error("capture_for: record without oracle AP");
    ap_max = std::max(ap_max, *r.oracle_ap);
  }
  const double ap0 = *records.front().oracle_ap;
  return capture_fraction(ap0, ap_max, *records[stop_index(records, c, tau)].oracle_ap);
}

double calibrate_threshold(std::span<const std::vector<StoppingRecord>> runs, Criterion c) {
  std::vector<double> candidates;
  for (const auto& run : runs) {
    for (const auto& r : run) {
      if (metric(r, c) > 0.0) candidates.push_back(metric(r, c));
    }
  }
  if (candidates.empty()) throw Error("calibrate_threshold: no positive metric values");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_tau = candidates.front(), best = -1e300;
  for (double tau : candidates) {
    double mean = 0.0;
    for (const auto& run : runs) mean += capture_for(run, c, tau);
    mean /= static_cast<double>(runs.size());
    if (mean > best + 1e-12) {
      best = mean;
      best_tau = tau;
    }
  }
  return best_tau;
}

template double embedding_distance(const Tensor<float>&, const Tensor<float>&, EmbNormalization);
template double embedding_distance(const Tensor<double>&, const Tensor<double>&, EmbNormalization);
template double embedding_distance(const model::UNet<float>&, const model::UNet<float>&,
                                   const Tensor<float>&, EmbNormalization);
template double embedding_distance(const model::UNet<double>&, const model::UNet<double>&,
                                   const Tensor<double>&, EmbNormalization);
template Diagnostics diagnostics(const model::UNet<float>&, const Tensor<float>&);
template Diagnostics diagnostics(const model::UNet<double>&, const Tensor<double>&);

}  // namespace sfadapt::stopping
