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

#include "sfadapt/train/adapt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/synthdata/synthdata.hpp"
#include "sfadapt/train/evaluate.hpp"

namespace sfadapt::train {

void to_json(nlohmann::json& j, const AblationFlags& a) {
  j = {{"confidence_filtering", a.confidence_filtering},
       {"teacher_tta", a.teacher_tta},
       {"l2sp", a.l2sp},
       {"student_augmentations", a.student_augmentations}};
}

void from_json(const nlohmann::json& j, AblationFlags& a) {
  for (const auto& [key, v] : j.items()) {
    if (key == "confidence_filtering") a.confidence_filtering = v.get<bool>();
    else if (key == "teacher_tta") a.teacher_tta = v.get<bool>();
    else if (key == "l2sp") a.l2sp = v.get<bool>();
    else if (key == "student_augmentations") a.student_augmentations = v.get<bool>();
    else throw ConfigError("ablation: unknown key '" + key + "'");
  }
}

int64_t AdaptConfig::warmup_iters() const {
  return static_cast<int64_t>(std::llround(warmup_fraction * static_cast<double>(iterations)));
}

void AdaptConfig::validate() const {
  if (iterations < 0) throw ConfigError("adapt: iterations must be >= 0");
  if (iterations > 0 && warmup_iters() >= iterations) {
    throw ConfigError("adapt: warm-up must be shorter than the run");
  }
  if (!(warmup_fraction >= 0.0)) throw ConfigError("adapt: warmup_fraction must be >= 0");
  if (batch_size < 1) throw ConfigError("adapt: batch_size must be >= 1");
  if (!(lr_peak >= 0.0)) throw ConfigError("adapt: lr_peak must be >= 0");
  if (!(ema_alpha > 0.0 && ema_alpha < 1.0)) throw ConfigError("adapt: ema_alpha must be in (0, 1)");
  if (eval_every < 1) throw ConfigError("adapt: eval_every must be >= 1");
  if (!(threshold_percentile >= 0.0 && threshold_percentile <= 100.0)) {
    throw ConfigError("adapt: threshold_percentile must be in [0, 100]");
  }
  if (!(threshold_momentum >= 0.0 && threshold_momentum < 1.0)) {
    throw ConfigError("adapt: threshold_momentum must be in [0, 1)");
  }
  loss.validate();
  stopping.validate();
  strong_aug.validate();
  decode.validate();
}

void to_json(nlohmann::json& j, const AdaptConfig& c) {
  j = {{"iterations", c.iterations},
       {"batch_size", c.batch_size},
       {"lr_peak", c.lr_peak},
       {"warmup_fraction", c.warmup_fraction},
       {"ema_alpha", c.ema_alpha},
       {"eval_every", c.eval_every},
       {"ablation", c.ablation},
       {"seed", c.seed},
       {"threshold_percentile", c.threshold_percentile},
       {"threshold_momentum", c.threshold_momentum},
       {"flow_threshold_per_component", c.flow_threshold_per_component},
       {"student_d4", c.student_d4},
       {"eval_model", c.eval_model == EvalModel::kStudent ? "student" : "teacher"},
       {"loss", c.loss},
       {"stopping", c.stopping},
       {"strong_aug", c.strong_aug},
       {"decode", c.decode}};
}

void from_json(const nlohmann::json& j, AdaptConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "iterations") c.iterations = v.get<int64_t>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "lr_peak") c.lr_peak = v.get<double>();
    else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
    else if (key == "ema_alpha") c.ema_alpha = v.get<double>();
    else if (key == "eval_every") c.eval_every = v.get<int64_t>();
    else if (key == "ablation") c.ablation = v.get<AblationFlags>();
    else if (key == "seed") c.seed = v.get<uint64_t>();
    else if (key == "threshold_percentile") c.threshold_percentile = v.get<double>();
    else if (key == "threshold_momentum") c.threshold_momentum = v.get<double>();
    else if (key == "flow_threshold_per_component") c.flow_threshold_per_component = v.get<bool>();
    else if (key == "student_d4") c.student_d4 = v.get<bool>();
    else if (key == "eval_model") {
      const auto s = v.get<std::string>();
      if (s == "student") c.eval_model = EvalModel::kStudent;
      else if (s == "teacher") c.eval_model = EvalModel::kTeacher;
      else throw ConfigError("adapt: eval_model must be student or teacher");
    } else if (key == "loss") c.loss = v.get<objective::LossConfig>();
    else if (key == "stopping") c.stopping = v.get<stopping::StoppingConfig>();
    else if (key == "strong_aug") c.strong_aug = v.get<augment::StrongAugConfig>();
    else if (key == "decode") c.decode = v.get<instances::DecodeConfig>();
    else throw ConfigError("adapt config: unknown key '" + key + "'");
  }
  c.validate();
}

namespace {

// Moves a pseudo-label bundle into the frame of the student's view g(x).
// Flow masks are per component, so odd rotations swap them.
void transform_bundle(augment::D4Element g, pseudolabel::PseudoLabelBundle<float>& b) {
  const std::array<augment::ChannelKind, 2> vec{augment::ChannelKind::kVector2,
                                                augment::ChannelKind::kVector2};
  b.labels = augment::apply_d4(g, b.labels);
  b.flow = augment::apply_d4(g, b.flow, vec);
  b.masks.p = tensor_cast<uint8_t>(augment::apply_d4(g, tensor_cast<int32_t>(b.masks.p)));
  Tensor<uint8_t> f = tensor_cast<uint8_t>(augment::apply_d4(g, tensor_cast<int32_t>(b.masks.f)));
  if (g.rotation % 2 == 1) {
    const std::size_t plane = f.shape().plane();
    for (int n = 0; n < f.n(); ++n) std::swap_ranges(f.plane(n, 0), f.plane(n, 0) + plane, f.plane(n, 1));
  }
  b.masks.f = std::move(f);
}

}  // namespace

Adapter::Adapter(AdaptConfig cfg, const model::ParamSnapshot& init, AdaptData data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      theta0_(init),
      student_(model::unet_from_snapshot<float>(init)),
      teacher_(model::unet_from_snapshot<float>(init)),
      opt_({.weight_decay = cfg_.loss.weight_decay}),
      evaluator_(student_, data_.validation_images, cfg_.stopping, cfg_.decode),
      batch_rng_(synthdata::derive_seed(cfg_.seed, 1)),
      aug_rng_(synthdata::derive_seed(synthdata::derive_seed(cfg_.seed, 2), cfg_.strong_aug.seed)) {
  cfg_.validate();
  if (data_.train_images.n() == 0) throw DataError("adapt: empty target image stream");
  if (data_.has_oracle() &&
      data_.test_truth.size() != static_cast<std::size_t>(data_.test_images.n())) {
    throw DataError("adapt: test images and labels differ in count");
  }
  thresholds_.momentum = cfg_.threshold_momentum;
  thresholds_.percentile = cfg_.threshold_percentile;
  thresholds_.per_component = cfg_.flow_threshold_per_component;
  order_.resize(static_cast<std::size_t>(data_.train_images.n()));
  cursor_ = order_.size();
}

const model::UNet<float>& Adapter::evaluated() const {
  return cfg_.eval_model == EvalModel::kStudent ? student_ : teacher_;
}

Tensor<float> Adapter::next_batch() {
  const Tensor<float>& src = data_.train_images;
  Tensor<float> out(cfg_.batch_size, src.c(), src.h(), src.w());
  const std::size_t item = static_cast<std::size_t>(src.c()) * src.shape().plane();
  for (int i = 0; i < cfg_.batch_size; ++i) {
    if (cursor_ == order_.size()) {
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), batch_rng_);
      cursor_ = 0;
    }
    std::copy_n(src.data() + order_[cursor_++] * item, item, out.data() + i * item);
  }
  return out;
}

StepLog Adapter::step() {
  const Tensor<float> batch = next_batch();
  const pseudolabel::PseudoLabelOptions popts{cfg_.ablation.teacher_tta,
                                              cfg_.ablation.confidence_filtering};
  auto pseudo = pseudolabel::make_pseudo_labels(pseudolabel::model_predictor(teacher_), batch,
                                                popts, thresholds_);

  Tensor<float> view = batch;
  if (cfg_.ablation.student_augmentations) {
    view = augment::strong_augment(batch, cfg_.strong_aug, aug_rng_);
    if (cfg_.student_d4) {
      const auto g = augment::all_d4()[std::uniform_int_distribution<int>(0, 7)(aug_rng_)];
      view = augment::apply_d4(g, view);
      transform_bundle(g, pseudo);
    }
  }

  student_.zero_grad();
  model::UNet<float>::Tape tape;
  const auto out = student_.forward_train(view, tape);
  const auto cons = objective::consistency_loss(out, pseudo, cfg_.loss);
  student_.backward(tape, cons.d_logits, cons.d_flow);
  double l2sp = 0.0;
  if (cfg_.ablation.l2sp && cfg_.loss.lambda_l2sp > 0.0) {
    l2sp = objective::add_l2sp_gradient(student_, theta0_, cfg_.loss.lambda_l2sp,
                                        cfg_.loss.l2sp_exclude_biases);
  }
  StepLog log;
  log.loss = objective::combine(cons.loss, l2sp, cfg_.loss);
  log.iteration = iteration_ + 1;
  if (!std::isfinite(log.loss.total)) {
    std::ostringstream msg;
    msg << "adapt: non-finite loss at iteration " << log.iteration << " (ce=" << log.loss.ce_term
        << ", mse=" << log.loss.mse_term << ", l2sp=" << log.loss.l2sp_term
        << ", mask_p=" << log.loss.mask_frac_p << ", mask_f=" << log.loss.mask_frac_f
        << ", q_cls=" << thresholds_.q_cls << ", q_flow=" << thresholds_.q_flow << ")";
    throw NumericError(msg.str());
  }
  log.lr = lr_at(log.iteration, cfg_.iterations, cfg_.warmup_iters(), cfg_.lr_peak);
  opt_.step(student_.parameters(), log.lr);
  ema_update(teacher_, student_, cfg_.ema_alpha);
  ++iteration_;
  return log;
}

stopping::StoppingRecord Adapter::evaluate() {
  const auto& net = evaluated();
  stopping::StoppingRecord r = evaluator_.evaluate(net, iteration_);
  if (data_.has_oracle()) {
    const auto pred = predict_instances(net, data_.test_images, cfg_.decode);
    r.oracle_ap = instances::average_precision(pred, data_.test_truth).mean_ap;
  }
  return r;
}

AdaptResult Adapter::run(const EvalCallback& on_eval, const StepCallback& on_step) {
  AdaptResult res;
  const bool halting = cfg_.stopping.mode != stopping::StopMode::kOff;
  std::optional<model::ParamSnapshot> last_good;
  int64_t last_good_iter = 0;

  auto do_eval = [&]() -> bool {
    const auto r = evaluate();
    res.history.push_back(r);
    if (on_eval) on_eval(r, evaluated());
    if (halting && r.fired != stopping::Fired::kNone) {
      res.halted = true;
      return true;
    }
    last_good = evaluated().snapshot(iteration_);
    last_good_iter = iteration_;
    return false;
  };

  if (cfg_.iterations > 0 && !do_eval()) {
    while (iteration_ < cfg_.iterations) {
      const StepLog log = step();
      res.steps.push_back(log);
      if (on_step) on_step(log);
      if ((iteration_ % cfg_.eval_every == 0 || iteration_ == cfg_.iterations) && do_eval()) break;
    }
  }

  res.final_student = student_.snapshot(iteration_);
  res.final_teacher = teacher_.snapshot(iteration_);
  res.stopped = last_good ? *last_good : evaluated().snapshot(iteration_);
  res.stopped_iteration = last_good ? last_good_iter : iteration_;
  return res;
}

AdaptResult adapt(const AdaptConfig& cfg, const model::ParamSnapshot& init, AdaptData data) {
  Adapter a(cfg, init, std::move(data));
  return a.run();
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(std::span<const StepLog> steps,
                        std::span<const stopping::StoppingRecord> history) {
  std::ostringstream os;
  os << "kind,iteration,lr,ce,mse,l2sp,total,mask_frac_p,mask_frac_f,"
        "fn_rate,d_emb,mean_confidence,tta_variance,oracle_ap,fired\n";
  auto eval_row = [&](const stopping::StoppingRecord& r) {
    os << "eval," << r.iteration << ",,,,,,,," << num(r.fn_rate) << ',' << num(r.d_emb) << ','
       << num(r.mean_confidence) << ',' << num(r.tta_variance) << ','
       << (r.oracle_ap ? num(*r.oracle_ap) : "") << ',' << stopping::to_string(r.fired) << '\n';
  };
  std::size_t h = 0;
  for (const auto& s : steps) {
    while (h < history.size() && history[h].iteration < s.iteration) eval_row(history[h++]);
    const auto& l = s.loss;
    os << "step," << s.iteration << ',' << num(s.lr) << ',' << num(l.ce_term) << ','
       << num(l.mse_term) << ',' << num(l.l2sp_term) << ',' << num(l.total) << ','
       << num(l.mask_frac_p) << ',' << num(l.mask_frac_f) << ",,,,,,\n";
  }
  while (h < history.size()) eval_row(history[h++]);
  return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepLog> steps,
                       std::span<const stopping::StoppingRecord> history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << metrics_csv(steps, history);
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace sfadapt::train
