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

#include <doctest.h>

#include <vector>

#include "sfadapt/errors.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/stopping/stopping.hpp"
#include "test_util.hpp"

using namespace sfadapt;
using namespace sfadapt::stopping;

namespace {

// Network whose head ignores its input: every pixel gets the head biases.
model::UNet<float> constant_output_net(float logit0, float logit1, float u, float v) {
  model::UNet<float> net({}, 3);
  for (auto& p : net.parameters()) {
    if (p.name == "head.weight") std::fill(p.value.begin(), p.value.end(), 0.0f);
    if (p.name == "head.bias") p.value = {logit0, logit1, u, v};
  }
  return net;
}

StoppingRecord rec(int64_t it, double fn, double emb, double ap) {
  StoppingRecord r;
  r.iteration = it;
  r.fn_rate = fn;
  r.d_emb = emb;
  r.oracle_ap = ap;
  return r;
}

}  // namespace

TEST_CASE("embedding distance closed forms") {
  Tensor<double> a(1, 8, 1, 1, 0.0), b(1, 8, 1, 1, 0.0);
  b(0, 0, 0, 0) = 3.0;
  b(0, 1, 0, 0) = 4.0;
  CHECK(embedding_distance(a, a) == 0.0);
  CHECK(embedding_distance(b, a) == 5.0);
  CHECK(embedding_distance(b, a, EmbNormalization::kPerDimSqrt) ==
        doctest::Approx(5.0 / std::sqrt(8.0)));

  Tensor<double> c(3, 2, 1, 1, 0.0), z(3, 2, 1, 1, 0.0);
  c(0, 0, 0, 0) = 1.0;
  c(1, 1, 0, 0) = 2.0;
  c(2, 0, 0, 0) = 3.0;
  CHECK(embedding_distance(c, z) == 2.0);
  CHECK_THROWS_AS(embedding_distance(Tensor<double>(0, 2, 1, 1), Tensor<double>(0, 2, 1, 1)), Error);
  CHECK_THROWS_AS(embedding_distance(c, Tensor<double>(2, 2, 1, 1)), ShapeError);
}

TEST_CASE("embedding distance between models is zero for identical weights and order-invariant") {
  model::UNet<float> a({}, 1), b({}, 2);
  const auto x = testing::random_tensor<float>({4, 1, 16, 16}, 3);
  CHECK(embedding_distance(a, a, x) == 0.0);
  const double d = embedding_distance(b, a, x);
  CHECK(d > 0.0);
  Tensor<float> rev(x.shape());
  for (int n = 0; n < 4; ++n) std::copy_n(x.plane(3 - n, 0), 256, rev.plane(n, 0));
  // Float forward passes; batch position may change rounding.
  CHECK(embedding_distance(b, a, rev) == doctest::Approx(d).epsilon(1e-6));
}

TEST_CASE("threshold decisions per mode") {
  StoppingConfig cfg;
  cfg.mode = StopMode::kFn;
  CHECK(decide(0.06, 0.0, cfg) == Fired::kFn);
  CHECK(decide(0.05, 9.0, cfg) == Fired::kNone);
  cfg.mode = StopMode::kEmb;
  CHECK(decide(0.9, 0.5, cfg) == Fired::kNone);
  CHECK(decide(0.0, 0.51, cfg) == Fired::kEmb);
  cfg.mode = StopMode::kEither;
  CHECK(decide(0.06, 0.6, cfg) == Fired::kFn);
  CHECK(decide(0.01, 0.6, cfg) == Fired::kEmb);
  cfg.mode = StopMode::kOff;
  CHECK(decide(1.0, 100.0, cfg) == Fired::kNone);

  StoppingConfig bad;
  bad.tau_emb = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_stop_mode("sometimes"), ConfigError);
  nlohmann::json j = StoppingConfig{};
  j["mode"] = "emb";
  CHECK(j.get<StoppingConfig>().mode == StopMode::kEmb);
  j["patience"] = 3;
  CHECK_THROWS_AS(j.get<StoppingConfig>(), ConfigError);
}

TEST_CASE("diagnostics: uniform softmax, constant output, determinism") {
  const auto x = testing::random_tensor<float>({2, 1, 16, 16}, 5);
  const auto flat = diagnostics(constant_output_net(0.3f, 0.3f, 0.0f, 0.0f), x);
  CHECK(flat.mean_confidence == doctest::Approx(0.5));
  CHECK(flat.tta_variance == 0.0);

  model::UNet<float> net({}, 8);
  const auto a = diagnostics(net, x);
  const auto b = diagnostics(net, x);
  CHECK(a.mean_confidence == b.mean_confidence);
  CHECK(a.tta_variance == b.tta_variance);
  CHECK(a.mean_confidence >= 0.5);
  CHECK(a.tta_variance > 0.0);
}

TEST_CASE("evaluator at the initial weights reports zero drift and leaves weights alone") {
  model::UNet<float> init({}, 4);
  const auto x = testing::random_tensor<float>({3, 1, 16, 16}, 6);
  StoppingEvaluator ev(init, x, StoppingConfig{});
  CHECK_FALSE(ev.cached());
  const auto before = init.snapshot();
  const auto r = ev.evaluate(init, 0);
  CHECK(ev.cached());
  CHECK(r.fn_rate == 0.0);
  CHECK(r.d_emb == 0.0);
  CHECK(r.fired == Fired::kNone);
  CHECK(init.snapshot() == before);

  model::UNet<float> other({}, 5);
  const auto r2 = ev.evaluate(other, 100);
  CHECK(r2.iteration == 100);
  CHECK(r2.d_emb > 0.0);
  CHECK(r2.fn_rate >= 0.0);
  CHECK(r2.fn_rate <= 1.0);
  CHECK(r2.emb_exceeded == (r2.d_emb > 0.5));
  CHECK_THROWS_AS(StoppingEvaluator(init, Tensor<float>(0, 1, 16, 16), StoppingConfig{}), DataError);
}

TEST_CASE("stop index, capture fraction and monotone thresholds") {
  const std::vector<StoppingRecord> run{rec(0, 0.0, 0.0, 0.5), rec(100, 0.02, 0.2, 0.7),
                                        rec(200, 0.04, 0.4, 0.8), rec(300, 0.08, 0.6, 0.75),
                                        rec(400, 0.12, 0.8, 0.6)};
  CHECK(stop_index(run, Criterion::kFn, 0.05) == 2);
  CHECK(stop_index(run, Criterion::kEmb, 0.5) == 2);
  CHECK(stop_index(run, Criterion::kFn, 1.0) == 4);
  CHECK(stop_index(run, Criterion::kEmb, 0.1) == 0);
  CHECK(capture_for(run, Criterion::kFn, 0.05) == doctest::Approx(1.0));
  CHECK(capture_for(run, Criterion::kEmb, 0.7) == doctest::Approx(0.25 / 0.3));
  CHECK(capture_fraction(0.5, 0.8, 0.8) == 1.0);
  CHECK(capture_fraction(0.5, 0.5, 0.5) == 1.0);
  CHECK(capture_fraction(0.5, 0.9, 0.7) == doctest::Approx(0.5));

  // A smaller threshold never stops later.
  for (double tau : {0.01, 0.03, 0.05, 0.1}) {
    for (double smaller : {tau / 2, tau / 4}) {
      CHECK(stop_index(run, Criterion::kFn, smaller) <= stop_index(run, Criterion::kFn, tau));
    }
  }
  auto no_oracle = run;
  no_oracle[1].oracle_ap.reset();
  CHECK_THROWS_AS(capture_for(no_oracle, Criterion::kFn, 0.05), Error);
}

TEST_CASE("calibration picks the smallest threshold with the best mean capture") {
  const std::vector<std::vector<StoppingRecord>> runs{
      {rec(0, 0, 0.0, 0.5), rec(1, 0, 0.2, 0.7), rec(2, 0, 0.4, 0.8), rec(3, 0, 0.6, 0.6)},
      {rec(0, 0, 0.0, 0.4), rec(1, 0, 0.3, 0.6), rec(2, 0, 0.5, 0.7), rec(3, 0, 0.7, 0.5)}};
  // Stopping at index 2 in both runs needs tau in [0.4, 0.6) and [0.5, 0.7).
  CHECK(calibrate_threshold(runs, Criterion::kEmb) == 0.5);
  const std::vector<std::vector<StoppingRecord>> flat{{rec(0, 0, 0, 0.5)}};
  CHECK_THROWS_AS(calibrate_threshold(flat, Criterion::kEmb), Error);
}
