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

// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. The end-to-end benchmark (criteria 7 to 9) trains several models and
// takes about an hour on one core; --resume reuses finished runs from
// --workdir.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/instances/instances.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/objective/objective.hpp"
#include "sfadapt/pseudolabel/pseudolabel.hpp"
#include "sfadapt/stopping/stopping.hpp"
#include "sfadapt/synthdata/pretrain.hpp"
#include "sfadapt/synthdata/synthdata.hpp"
#include "sfadapt/train/adapt.hpp"
#include "sfadapt/train/evaluate.hpp"
#include "sfadapt/train/optim.hpp"

using namespace sfadapt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + fmt(f, v[i]);
  return s;
}

template <class T>
Tensor<T> random_tensor(Shape4 s, uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

// ---------------------------------------------------------------------------

Outcome equivariance() {
  Timer t;
  using augment::ChannelKind;
  const std::vector<ChannelKind> kinds{ChannelKind::kScalar, ChannelKind::kVector2,
                                       ChannelKind::kVector2};
  const auto square = random_tensor<float>({2, 3, 16, 16}, 1, -1, 1);
  const auto wide = random_tensor<float>({1, 3, 8, 24}, 2, -1, 1);
  int exact = 0;
  for (const auto g : augment::all_d4()) {
    for (const auto* x : {&square, &wide}) {
      const auto y = augment::apply_d4(g, *x, kinds);
      if (augment::apply_d4(augment::inverse(g), y, kinds) == *x) ++exact;
    }
  }

  const model::UNet<float> net({}, 7);
  const auto predict = pseudolabel::model_predictor(net);
  const auto x = random_tensor<float>({2, 1, 32, 32}, 3, 0, 1);
  const auto base = pseudolabel::tta_predict(predict, x).mean;
  const std::vector<ChannelKind> vec{ChannelKind::kVector2, ChannelKind::kVector2};
  double worst = 0.0;
  for (const auto g : augment::all_d4()) {
    const auto moved = pseudolabel::tta_predict(predict, augment::apply_d4(g, x)).mean;
    worst = std::max(worst, max_abs_diff(moved.prob, augment::apply_d4(g, base.prob)));
    worst = std::max(worst, max_abs_diff(moved.flow, augment::apply_d4(g, base.flow, vec)));
  }
  const double secs = t.seconds();
  return {exact == 16 && worst <= 1e-5 && secs < 10.0,
          fmt("%d/16 exact round-trips, TTA max deviation %.2e (<= 1e-5), %.1f s (< 10 s)", exact,
              worst, secs)};
}

Outcome objective_correctness() {
  Timer t;
  using objective::LossConfig;
  // Single pixel: logits (0, 0) with label 1, flow error (1, 0).
  Tensor<double> logits(1, 2, 1, 1, 0.0), flow(1, 2, 1, 1, 0.0), target(1, 2, 1, 1, 0.0);
  target(0, 0, 0, 0) = 1.0;
  Tensor<int32_t> labels(1, 1, 1, 1, 1);
  const pseudolabel::Masks ones{Tensor<uint8_t>(1, 1, 1, 1, 1), Tensor<uint8_t>(1, 2, 1, 1, 1)};
  const auto r = objective::consistency_loss(logits, flow, labels, target, ones, LossConfig{});
  const bool pixel_ok = std::abs(r.loss.ce_term - std::log(2.0)) <= 1e-6 &&
                        std::abs(r.loss.total - (std::log(2.0) + 0.25)) <= 1e-6 &&
                        std::abs(r.loss.total - 0.9431) <= 5e-5;

  // L2-SP: diffs (1, 0, -2) on a weight and 1 on a bias.
  model::ParamSnapshot w0;
  w0.architecture = "toy";
  w0.entries = {{"a.weight", {3}, {1.0, 2.0, 3.0}}, {"a.bias", {1}, {0.5}}};
  auto w = w0;
  w.entries[0].values = {2.0, 2.0, 1.0};
  w.entries[1].values = {1.5};
  const auto g = objective::l2sp_gradient(w, w0, 0.5);
  const bool l2sp_ok = objective::l2sp_penalty(w0, w0, 1e-4) == 0.0 &&
                       objective::l2sp_penalty(w, w0, 1.0) == 6.0 &&
                       objective::l2sp_penalty(w, w0, 0.25) == 1.5 &&
                       g.entries[0].values == std::vector<double>{1.0, 0.0, -2.0} &&
                       g.entries[1].values == std::vector<double>{1.0};

  // Finite differences of the full objective on a small double network.
  model::UNet<double> net({.base_width = 4}, 31);
  const auto x = random_tensor<double>({2, 1, 16, 16}, 32, 0, 1);
  const auto theta0 = net.snapshot();
  std::mt19937_64 rng(33);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& p : net.parameters()) {
    for (auto& v : p.value) v += jitter(rng);
  }
  pseudolabel::PseudoLabelBundle<double> pseudo;
  pseudo.labels = Tensor<int32_t>(2, 1, 16, 16);
  pseudo.flow = random_tensor<double>({2, 2, 16, 16}, 34, -1, 1);
  pseudo.masks = {Tensor<uint8_t>(2, 1, 16, 16), Tensor<uint8_t>(2, 2, 16, 16)};
  for (auto& v : pseudo.labels.values()) v = static_cast<int32_t>(rng() % 2);
  for (auto& v : pseudo.masks.p.values()) v = rng() % 4 != 0;
  for (auto& v : pseudo.masks.f.values()) v = rng() % 4 != 0;
  LossConfig cfg;
  cfg.lambda_l2sp = 0.3;
  const auto objective_value = [&] {
    return objective::total_loss(net.forward(x), pseudo, net.snapshot(), theta0, cfg).total;
  };
  net.zero_grad();
  model::UNet<double>::Tape tape;
  const auto out = net.forward_train(x, tape);
  const auto cons = objective::consistency_loss(out, pseudo, cfg);
  net.backward(tape, cons.d_logits, cons.d_flow);
  objective::add_l2sp_gradient(net, theta0, cfg.lambda_l2sp);
  const double h = 1e-6;
  const int coords = 60;
  double worst = 0.0;
  for (int k = 0; k < coords; ++k) {
    auto& p = net.parameters()[rng() % net.parameters().size()];
    const std::size_t i = rng() % p.value.size();
    const double orig = p.value[i];
    p.value[i] = orig + h;
    const double up = objective_value();
    p.value[i] = orig - h;
    const double down = objective_value();
    p.value[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(p.grad[i]), 1e-6});
    worst = std::max(worst, std::abs(p.grad[i] - numeric) / scale);
  }
  const double secs = t.seconds();
  return {pixel_ok && l2sp_ok && worst < 1e-3 && secs < 60.0,
          fmt("ce %.9f, total %.9f, L2-SP closed forms %s, FD max rel err %.2e on %d coords, "
              "%.1f s (< 60 s)",
              r.loss.ce_term, r.loss.total, l2sp_ok ? "exact" : "WRONG", worst, coords, secs)};
}

Outcome ema_closed_form() {
  const model::UNet<double> student({.base_width = 4}, 1);
  model::UNet<double> teacher({.base_width = 4}, 2);
  const auto t0 = teacher.snapshot();
  const double alpha = 0.99;
  for (int k = 0; k < 10; ++k) train::ema_update(teacher, student, alpha);
  const auto s = student.snapshot();
  const auto t10 = teacher.snapshot();
  const double a10 = std::pow(alpha, 10);
  double worst = 0.0;
  for (std::size_t e = 0; e < s.entries.size(); ++e) {
    for (std::size_t i = 0; i < s.entries[e].values.size(); ++i) {
      const double sv = s.entries[e].values[i];
      const double expected = sv + a10 * (t0.entries[e].values[i] - sv);
      worst = std::max(worst, std::abs(t10.entries[e].values[i] - expected));
    }
  }
  return {worst <= 1e-10, fmt("max |teacher - closed form| %.2e (<= 1e-10)", worst)};
}

Outcome masking_statistics() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  pseudolabel::UncertaintyThresholdState state;
  double kept_p = 0.0, kept_f = 0.0;
  int batches = 0;
  for (int it = 0; it < 1000; ++it) {
    pseudolabel::Uncertainty<double> u;
    u.u_cls = Tensor<double>(8, 1, 32, 32);
    u.u_flow = Tensor<double>(8, 1, 32, 32);
    u.u_flow_comp = Tensor<double>(8, 2, 32, 32);
    for (auto& v : u.u_cls.values()) v = uni(rng);
    for (auto& v : u.u_flow.values()) v = uni(rng);
    for (auto& v : u.u_flow_comp.values()) v = uni(rng);
    state = pseudolabel::update_thresholds(state, u);
    const auto m = pseudolabel::build_masks(u, state);
    if (it < 100) continue;  // burn-in of the moving average
    kept_p += std::count(m.p.values().begin(), m.p.values().end(), 1) / double(m.p.size());
    kept_f += std::count(m.f.values().begin(), m.f.values().end(), 1) / double(m.f.size());
    ++batches;
  }
  kept_p /= batches;
  kept_f /= batches;
  const auto in = [](double f) { return f >= 0.78 && f <= 0.82; };
  return {in(kept_p) && in(kept_f),
          fmt("unmasked fraction cls %.4f, flow %.4f (in [0.78, 0.82])", kept_p, kept_f)};
}

instances::InstanceLabeling squares(int n, int side, int size) {
  // n non-overlapping side x side squares on a size x size grid.
  instances::InstanceLabeling l(size, size);
  const int per_row = size / (side + 1);
  for (int k = 0; k < n; ++k) {
    const int oy = (k / per_row) * (side + 1), ox = (k % per_row) * (side + 1);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) l.at(oy + y, ox + x) = k + 1;
    }
  }
  return l;
}

Outcome metric_identities() {
  std::vector<std::string> bad;
  const auto sample = synthdata::generate(synthdata::DomainSpec{}, 1, 5).samples[0];
  if (instances::fn_rate(sample.instances, sample.instances) != 0.0) bad.push_back("fn_rate(x,x)");

  const model::UNet<float> net({}, 3);
  const auto x = random_tensor<float>({4, 1, 32, 32}, 4, 0, 1);
  stopping::StoppingEvaluator ev(net, x, {}, {});
  const auto r0 = ev.evaluate(net, 0);
  if (stopping::embedding_distance(net, net, x) != 0.0 || r0.d_emb != 0.0 || r0.fn_rate != 0.0) {
    bad.push_back("d_emb(theta0)");
  }

  // 20 initial instances, one lost: TP = 19, FN = 1.
  const auto initial = squares(20, 3, 24);
  auto current = initial;
  for (auto& v : current.labels) {
    if (v == 20) v = 0;
  }
  const double arith = instances::FnCounts{19, 1}.rate();
  const double fixture = instances::fn_rate(initial, current);
  if (arith != 0.05 || fixture != 0.05) bad.push_back(fmt("fn arithmetic %.17g/%.17g", arith, fixture));

  const auto two = squares(2, 4, 12);
  auto one = two;
  for (auto& v : one.labels) {
    if (v == 2) v = 0;
  }
  const instances::InstanceLabeling empty(12, 12);
  const double ap_same = instances::average_precision(two, two);
  const double ap_none = instances::average_precision(empty, two);
  const double ap_half = instances::average_precision(one, two);
  if (ap_same != 1.0) bad.push_back("AP 1.0");
  if (ap_none != 0.0) bad.push_back("AP 0.0");
  if (ap_half != 0.5) bad.push_back("AP 0.5");
  std::string detail = fmt("fn 0.05 exact, AP fixtures %.17g/%.17g/%.17g", ap_same, ap_none, ap_half);
  for (const auto& b : bad) detail += "; failed " + b;
  return {bad.empty(), detail};
}

Outcome closure() {
  Timer t;
  const auto data = synthdata::generate(synthdata::DomainSpec{}, 100, 2026);
  int perfect = 0;
  double worst = 1.0;
  for (const auto& s : data.samples) {
    Tensor<float> prob(1, 2, s.image.h(), s.image.w());
    for (std::size_t k = 0; k < s.class_target.size(); ++k) {
      prob.plane(0, 1)[k] = s.class_target.data()[k];
      prob.plane(0, 0)[k] = 1.0f - s.class_target.data()[k];
    }
    const double ap =
        instances::average_precision(instances::decode_item(prob, s.flow_target, 0), s.instances);
    perfect += ap == 1.0;
    worst = std::min(worst, ap);
  }
  const double secs = t.seconds();
  return {perfect == 100 && secs < 120.0,
          fmt("%d/100 samples decode to AP 1.0 (worst %.3f), %.1f s (< 120 s)", perfect, worst, secs)};
}

Outcome determinism(const fs::path& workdir) {
  synthdata::DomainSpec spec;
  spec.haze_level = 0.5;
  const auto tr = synthdata::generate(spec, 16, 1), va = synthdata::generate(spec, 4, 2),
             te = synthdata::generate(spec, 4, 3);
  const auto init = model::UNet<float>({.base_width = 8}, 4).snapshot();
  train::AdaptConfig cfg;
  cfg.iterations = 30;
  cfg.batch_size = 4;
  cfg.eval_every = 10;
  cfg.lr_peak = 1e-3;
  cfg.seed = 17;
  cfg.stopping.mode = stopping::StopMode::kOff;
  std::vector<std::string> bytes;
  for (int k = 0; k < 2; ++k) {
    const auto res = train::adapt(cfg, init, {tr.images(), va.images(), te.images(), te.labelings()});
    const auto path = workdir / fmt("determinism_%d.csv", k);
    train::write_metrics_csv(path, res.steps, res.history);
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    bytes.push_back(ss.str());
  }
  const bool same = bytes[0] == bytes[1] && !bytes[0].empty();
  const auto lines = std::count(bytes[0].begin(), bytes[0].end(), '\n');
  return {same, fmt("two runs, %ld CSV lines, %zu bytes, %s", static_cast<long>(lines), bytes[0].size(),
                    same ? "byte-identical" : "DIFFERENT")};
}

// ---------------------------------------------------------------------------
// End-to-end benchmark.

struct Benchmark {
  synthdata::DomainSpec source;
  synthdata::DomainSpec target_a;  // calibration pair: hazy background
  synthdata::DomainSpec target_b;  // held-out pair for the reused thresholds
  int n_source_train = 256;
  int n_source_test = 64;
  int n_target_train = 256;
  int n_target_validation = 32;
  int n_target_test = 64;
  synthdata::PretrainConfig pretrain;
  train::AdaptConfig adapt;
  std::vector<uint64_t> seeds{1, 2, 3};

  Benchmark() {
    target_a.haze_level = 0.6;
    target_a.texture_noise_sigma = 0.06;
    target_b.texture_noise_sigma = 0.2;  // low signal-to-noise
    target_b.intensity_fg = {0.3, 0.5};
    pretrain.epochs = 20;
    adapt.iterations = 2000;
    adapt.stopping.mode = stopping::StopMode::kOff;  // full curves for post-hoc selection
  }
};

struct RunSummary {
  double ap0 = 0.0, ap_final = 0.0;
  std::vector<stopping::StoppingRecord> records;
  double seconds = 0.0;

  double gain() const { return ap_final - ap0; }
};

json to_json(const RunSummary& r) {
  json recs = json::array();
  for (const auto& s : r.records) {
    recs.push_back({s.iteration, s.fn_rate, s.d_emb, s.oracle_ap.value_or(NAN)});
  }
  return {{"ap0", r.ap0}, {"ap_final", r.ap_final}, {"seconds", r.seconds}, {"records", recs}};
}

RunSummary from_json_summary(const json& j) {
  RunSummary r;
  r.ap0 = j.at("ap0");
  r.ap_final = j.at("ap_final");
  r.seconds = j.at("seconds");
  for (const auto& s : j.at("records")) {
    stopping::StoppingRecord rec;
    rec.iteration = s[0];
    rec.fn_rate = s[1];
    rec.d_emb = s[2];
    rec.oracle_ap = s[3].get<double>();
    r.records.push_back(rec);
  }
  return r;
}

class BenchmarkRunner {
 public:
  BenchmarkRunner(Benchmark b, fs::path dir, bool resume)
      : b_(std::move(b)), dir_(std::move(dir)), resume_(resume) {
    fs::create_directories(dir_);
  }

  struct Source {
    model::ParamSnapshot theta0;
    double source_ap = 0.0;
    double seconds = 0.0;
  };

  const Source& source(uint64_t seed) {
    auto it = sources_.find(seed);
    if (it != sources_.end()) return it->second;
    Timer t;
    Source s;
    const auto ckpt = dir_ / fmt("theta0_seed%llu.ckpt", static_cast<unsigned long long>(seed));
    const auto train = synthdata::generate(b_.source, b_.n_source_train, synthdata::derive_seed(seed, 100));
    const auto test = synthdata::generate(b_.source, b_.n_source_test, synthdata::derive_seed(seed, 101));
    model::UNet<float> net({}, seed);
    if (resume_ && fs::exists(ckpt)) {
      s.theta0 = model::load_checkpoint(ckpt);
      net.restore(s.theta0);
    } else {
      auto pc = b_.pretrain;
      pc.seed = seed;
      std::fprintf(stderr, "[bench] pretraining source model, seed %llu\n",
                   static_cast<unsigned long long>(seed));
      s.theta0 = synthdata::pretrain_source(net, train, pc);
      model::save_checkpoint(s.theta0, ckpt);
    }
    s.source_ap = train::evaluate_ap(net, test).mean_ap;
    s.seconds = t.seconds();
    return sources_.emplace(seed, std::move(s)).first->second;
  }

  // One adaptation run; ablation mode bits: 1 confidence filtering, 2 teacher
  // TTA, 4 L2-SP, 8 student augmentations (set bit = disabled).
  RunSummary run(char pair, uint64_t seed, int ablation) {
    const auto key = fmt("run_%c_seed%llu_abl%d.json", pair, static_cast<unsigned long long>(seed), ablation);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    if (resume_ && fs::exists(dir_ / key)) {
      std::ifstream is(dir_ / key);
      return runs_[key] = from_json_summary(json::parse(is));
    }
    const auto& src = source(seed);
    const auto& spec = pair == 'A' ? b_.target_a : b_.target_b;
    const uint64_t base = synthdata::derive_seed(seed, pair == 'A' ? 200 : 300);
    const auto tr = synthdata::generate(spec, b_.n_target_train, synthdata::derive_seed(base, 0));
    const auto va = synthdata::generate(spec, b_.n_target_validation, synthdata::derive_seed(base, 1));
    const auto te = synthdata::generate(spec, b_.n_target_test, synthdata::derive_seed(base, 2));
    auto cfg = b_.adapt;
    cfg.seed = seed;
    cfg.ablation.confidence_filtering = !(ablation & 1);
    cfg.ablation.teacher_tta = !(ablation & 2);
    cfg.ablation.l2sp = !(ablation & 4);
    cfg.ablation.student_augmentations = !(ablation & 8);
    std::fprintf(stderr, "[bench] adapting pair %c seed %llu ablation %d\n", pair,
                 static_cast<unsigned long long>(seed), ablation);
    Timer t;
    const auto res = train::adapt(cfg, src.theta0, {tr.images(), va.images(), te.images(), te.labelings()});
    RunSummary r;
    r.records = res.history;
    r.ap0 = *res.history.front().oracle_ap;
    r.ap_final = *res.history.back().oracle_ap;
    r.seconds = t.seconds();
    std::fprintf(stderr, "[bench]   AP %.3f -> %.3f in %.0f s\n", r.ap0, r.ap_final, r.seconds);
    std::ofstream(dir_ / key) << to_json(r).dump() << '\n';
    return runs_[key] = r;
  }

  const Benchmark& config() const { return b_; }

 private:
  Benchmark b_;
  fs::path dir_;
  bool resume_;
  std::map<uint64_t, Source> sources_;
  std::map<std::string, RunSummary> runs_;
};

Outcome benchmark_gain(BenchmarkRunner& bench) {
  std::vector<double> gate, gap, gain, minutes;
  for (const auto seed : bench.config().seeds) {
    const auto& src = bench.source(seed);
    const auto run = bench.run('A', seed, 0);
    gate.push_back(src.source_ap);
    gap.push_back(src.source_ap - run.ap0);
    gain.push_back(run.gain());
    minutes.push_back((src.seconds + run.seconds) / 60.0);
  }
  const bool gate_ok = *std::min_element(gate.begin(), gate.end()) >= 0.8;
  const bool gap_ok = *std::min_element(gap.begin(), gap.end()) >= 0.15;
  const double med = median(gain);
  const double med_minutes = median(minutes);
  return {gate_ok && gap_ok && med >= 0.05 && med_minutes < 30.0,
          fmt("source AP %s (>= 0.8), gap %s (>= 0.15), gain %s, median gain %.3f (>= 0.05), "
              "%.1f min per seed (< 30)",
              join(gate).c_str(), join(gap).c_str(), join(gain).c_str(), med, med_minutes)};
}

Outcome stopping_capture(BenchmarkRunner& bench) {
  std::vector<std::vector<stopping::StoppingRecord>> calib, held_out;
  for (const auto seed : bench.config().seeds) {
    calib.push_back(bench.run('A', seed, 0).records);
    held_out.push_back(bench.run('B', seed, 0).records);
  }
  bool pass = true;
  std::string detail;
  for (auto [name, c] : {std::pair{"fn", stopping::Criterion::kFn},
                         std::pair{"emb", stopping::Criterion::kEmb}}) {
    const double tau = stopping::calibrate_threshold(calib, c);
    std::vector<double> cap_a, cap_b;
    std::vector<double> stop_b;
    for (const auto& r : calib) cap_a.push_back(stopping::capture_for(r, c, tau));
    for (const auto& r : held_out) {
      cap_b.push_back(stopping::capture_for(r, c, tau));
      stop_b.push_back(static_cast<double>(r[stopping::stop_index(r, c, tau)].iteration));
    }
    const double med = median(cap_b);
    pass = pass && med >= 0.5;
    detail += fmt("%s%s: tau %.4g, capture A %s, B %s at iters %s (median %.2f >= 0.5)",
                  detail.empty() ? "" : "; ", name, tau, join(cap_a, "%.2f").c_str(),
                  join(cap_b, "%.2f").c_str(), join(stop_b, "%.0f").c_str(), med);
  }
  return {pass, detail};
}

Outcome ablation_direction(BenchmarkRunner& bench) {
  const std::vector<std::pair<int, const char*>> toggles{
      {1, "confidence filtering"}, {2, "teacher TTA"}, {4, "L2-SP"}, {8, "student augmentations"}};
  std::map<int, std::vector<double>> drops;
  for (const auto seed : bench.config().seeds) {
    const double full = bench.run('A', seed, 0).gain();
    for (const auto& [bit, name] : toggles) drops[bit].push_back(full - bench.run('A', seed, bit).gain());
  }
  std::vector<std::pair<double, int>> ranked;
  for (const auto& [bit, name] : toggles) ranked.emplace_back(median(drops[bit]), bit);
  std::sort(ranked.begin(), ranked.end(), std::greater<>());
  std::string detail = "median gain drop:";
  for (const auto& [bit, name] : toggles) {
    detail += fmt(" %s %.3f (%s);", name, median(drops[bit]), join(drops[bit]).c_str());
  }
  return {ranked[0].second == 8 && ranked[1].second == 4,
          detail + " required order: student augmentations first, L2-SP second"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sfadapt acceptance suite"};
  fs::path workdir = fs::temp_directory_path() / "sfadapt_acceptance";
  bool resume = false, skip_benchmark = false;
  int64_t iterations = 0;
  app.add_option("--workdir", workdir, "Scratch directory for runs and checkpoints");
  app.add_flag("--resume", resume, "Reuse benchmark runs already in the workdir");
  app.add_flag("--skip-benchmark", skip_benchmark, "Only the fast criteria (1-6, 10)");
  app.add_option("--iterations", iterations, "Override the adaptation length (plumbing checks)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  int failures = 0;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d: %s %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "equivariance", equivariance);
  report(2, "objective correctness", objective_correctness);
  report(3, "EMA closed form", ema_closed_form);
  report(4, "masking statistics", masking_statistics);
  report(5, "metric identities", metric_identities);
  report(6, "generator/decoder closure", closure);
  if (!skip_benchmark) {
    Benchmark b;
    if (iterations > 0) {
      b.adapt.iterations = iterations;
      b.adapt.eval_every = std::max<int64_t>(1, iterations / 4);
    }
    BenchmarkRunner bench(b, workdir / "benchmark", resume);
    report(7, "end-to-end adaptation benchmark", [&] { return benchmark_gain(bench); });
    report(8, "stopping capture", [&] { return stopping_capture(bench); });
    report(9, "ablation direction", [&] { return ablation_direction(bench); });
  }
  report(10, "determinism", [&] { return determinism(workdir); });
  return failures == 0 ? 0 : 1;
}
