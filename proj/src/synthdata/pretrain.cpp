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

#include "sfadapt/synthdata/pretrain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/train/optim.hpp"

namespace sfadapt::synthdata {

void PretrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
  if (!(lr_peak >= 0.0)) throw ConfigError("pretrain: lr_peak must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("pretrain: warmup_fraction must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !(lambda_bal >= 0.0)) {
    throw ConfigError("pretrain: weight_decay and lambda_bal must be >= 0");
  }
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"epochs", c.epochs},           {"batch_size", c.batch_size},
       {"lr_peak", c.lr_peak},         {"warmup_fraction", c.warmup_fraction},
       {"weight_decay", c.weight_decay}, {"lambda_bal", c.lambda_bal},
       {"d4_augment", c.d4_augment},   {"seed", c.seed},
       {"gate_ap", c.gate_ap}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "lr_peak") c.lr_peak = v.get<double>();
    else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "lambda_bal") c.lambda_bal = v.get<double>();
    else if (key == "d4_augment") c.d4_augment = v.get<bool>();
    else if (key == "seed") c.seed = v.get<uint64_t>();
    else if (key == "gate_ap") c.gate_ap = v.get<double>();
    else throw ConfigError("pretrain config: unknown key '" + key + "'");
  }
  c.validate();
}

Tensor<int32_t> class_labels(const Dataset& data) {
  const Tensor<float> images = data.images();
  Tensor<int32_t> labels(images.n(), 1, images.h(), images.w());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& l = data.samples[i].instances.labels;
    std::transform(l.begin(), l.end(), labels.plane(static_cast<int>(i), 0),
                   [](int32_t v) { return v > 0 ? 1 : 0; });
  }
  return labels;
}

namespace {

template <class T>
Tensor<T> gather(const Tensor<T>& t, std::span<const int> idx) {
  Tensor<T> out(static_cast<int>(idx.size()), t.c(), t.h(), t.w());
  const std::size_t item = static_cast<std::size_t>(t.c()) * t.shape().plane();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(t.data() + idx[i] * item, item, out.data() + i * item);
  }
  return out;
}

}  // namespace

model::ParamSnapshot pretrain_source(model::UNet<float>& net, const Dataset& train,
                                     const PretrainConfig& cfg,
                                     const std::function<void(const PretrainProgress&)>& on_epoch) {
  cfg.validate();
  if (cfg.epochs == 0) return net.snapshot(0);
  if (train.empty()) throw DataError("pretrain: empty training set");
  if (!train.labeled()) throw DataError("pretrain: training set has no masks");

  const Tensor<float> images = train.images();
  const Tensor<float> flows = train.flow_targets();
  const Tensor<int32_t> labels = class_labels(train);
  const int n = images.n();
  const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = static_cast<int64_t>(cfg.epochs) * batches;
  const auto warmup = static_cast<int64_t>(std::llround(cfg.warmup_fraction * total));

  objective::LossConfig loss_cfg;
  loss_cfg.lambda_bal = cfg.lambda_bal;
  loss_cfg.lambda_l2sp = 0.0;
  train::AdamW<float> opt({.weight_decay = cfg.weight_decay});
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5052));
  const auto group = augment::all_d4();
  const std::array<augment::ChannelKind, 2> vec{augment::ChannelKind::kVector2,
                                                augment::ChannelKind::kVector2};

  std::vector<int> order(static_cast<std::size_t>(n));
  int64_t it = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
      const int first = b * cfg.batch_size;
      const int count = std::min(cfg.batch_size, n - first);
      const std::span<const int> idx(order.data() + first, static_cast<std::size_t>(count));
      Tensor<float> x = gather(images, idx);
      Tensor<float> f = gather(flows, idx);
      Tensor<int32_t> y = gather(labels, idx);
      if (cfg.d4_augment) {
        const auto g = group[std::uniform_int_distribution<int>(0, 7)(rng)];
        x = augment::apply_d4(g, x);
        f = augment::apply_d4(g, f, vec);
        y = augment::apply_d4(g, y);
      }
      pseudolabel::Masks masks{Tensor<uint8_t>(count, 1, x.h(), x.w(), 1),
                               Tensor<uint8_t>(count, 2, x.h(), x.w(), 1)};
      net.zero_grad();
      model::UNet<float>::Tape tape;
      const auto out = net.forward_train(x, tape);
      const auto res = objective::consistency_loss(out.class_logits, out.flow, y, f, masks, loss_cfg);
      if (!std::isfinite(res.loss.total)) {
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
      }
      net.backward(tape, res.d_logits, res.d_flow);
      ++it;
      opt.step(net.parameters(), train::lr_at(it, total, warmup, cfg.lr_peak));
      loss_sum += res.loss.total;
    }
    if (on_epoch) on_epoch({epoch + 1, loss_sum / batches});
  }
  return net.snapshot(it);
}

}  // namespace sfadapt::synthdata
