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

#include <cmath>
#include <fstream>
#include <set>
#include <random>

#include "sfadapt/augment/d4.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/objective/objective.hpp"
#include "sfadapt/train/optim.hpp"
#include "test_util.hpp"

using namespace sfadapt;
using model::UNet;

TEST_CASE("forward output shapes and finiteness on an all-zero image") {
  UNet<float> net({}, 3);
  Tensor<float> x(2, 1, 32, 24);
  const auto out = net.forward(x);
  CHECK(out.class_logits.shape() == Shape4{2, 2, 32, 24});
  CHECK(out.flow.shape() == Shape4{2, 2, 32, 24});
  CHECK(out.bottleneck.shape() == Shape4{2, net.embedding_dim(), 1, 1});
  CHECK(out.bottleneck_map.shape() == Shape4{2, net.embedding_dim(), 4, 3});
  CHECK(out.class_logits.all_finite());
  CHECK(out.flow.all_finite());
  CHECK(out.bottleneck.all_finite());
}

TEST_CASE("forward is deterministic and has no side effects") {
  UNet<float> net({}, 5);
  const auto before = net.snapshot();
  const auto x = testing::random_tensor<float>({1, 1, 16, 16}, 1);
  const auto a = net.forward(x);
  const auto b = net.forward(x);
  CHECK(a.class_logits == b.class_logits);
  CHECK(a.flow == b.flow);
  CHECK(a.bottleneck == b.bottleneck);
  CHECK(net.snapshot() == before);
}

TEST_CASE("the network is not rotation equivariant by construction") {
  UNet<float> net({}, 9);
  const auto x = testing::random_tensor<float>({1, 1, 16, 16}, 2);
  const augment::D4Element r90{1, false};
  const auto rotated_out = net.forward(augment::apply_d4(r90, x)).class_logits;
  const auto out_rotated = augment::apply_d4(r90, net.forward(x).class_logits);
  double diff = 0.0;
  for (std::size_t i = 0; i < rotated_out.size(); ++i) {
    diff = std::max(diff, std::abs(double(rotated_out.data()[i]) - out_rotated.data()[i]));
  }
  CHECK(diff > 1e-4);
}

TEST_CASE("input validation") {
  UNet<float> net;
  CHECK_THROWS_AS(net.forward(Tensor<float>(1, 1, 20, 16)), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor<float>(1, 2, 16, 16)), ShapeError);
  Tensor<float> bad(1, 1, 16, 16);
  bad(0, 0, 3, 3) = std::nanf("");
  CHECK_THROWS_AS(net.forward(bad), NumericError);
}

TEST_CASE("snapshot and restore round-trip bit-exactly") {
  UNet<float> a({}, 1), b({}, 2);
  const auto x = testing::random_tensor<float>({2, 1, 16, 16}, 3);
  b.restore(a.snapshot());
  CHECK(a.forward(x).class_logits == b.forward(x).class_logits);
  CHECK(a.forward(x).flow == b.forward(x).flow);
  CHECK(b.snapshot() == a.snapshot());
}

TEST_CASE("parameter names are unique and ordered identically across instances") {
  const auto s1 = UNet<float>({}, 1).snapshot();
  const auto s2 = UNet<double>({}, 2).snapshot();
  REQUIRE(s1.entries.size() == s2.entries.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < s1.entries.size(); ++i) {
    CHECK(s1.entries[i].name == s2.entries[i].name);
    CHECK(names.insert(s1.entries[i].name).second);
  }
  CHECK(s1.find("head.weight") != nullptr);
  CHECK(s1.find("bottleneck.conv.weight") != nullptr);
}

TEST_CASE("restore rejects a renamed entry with the offending names") {
  UNet<float> net;
  auto snap = net.snapshot();
  snap.entries[1].name = "enc1.norm.gamma";
  try {
    net.restore(snap);
    FAIL("expected ArchitectureMismatch");
  } catch (const ArchitectureMismatch& e) {
    const std::string msg = e.what();
    CHECK(msg.find("enc1.norm.gamma") != std::string::npos);
    CHECK(msg.find("enc1.norm.weight") != std::string::npos);
  }
  auto wrong_arch = net.snapshot();
  wrong_arch.architecture = "something-else";
  CHECK_THROWS_AS(net.restore(wrong_arch), ArchitectureMismatch);
  UNet<float> wide({.base_width = 8});
  CHECK_THROWS_AS(net.restore(wide.snapshot()), ArchitectureMismatch);
}

TEST_CASE("checkpoint files round-trip bit-exactly") {
  const auto dir = testing::temp_dir("ckpt");
  UNet<double> dnet({}, 11);
  auto snap = dnet.snapshot(42);
  snap.seed = 7;
  model::save_checkpoint(snap, dir / "d.ckpt");
  CHECK(model::load_checkpoint(dir / "d.ckpt") == snap);

  const auto fsnap = UNet<float>({}, 12).snapshot(3);
  model::save_checkpoint(fsnap, dir / "f.ckpt", model::StorageType::kFloat32);
  CHECK(model::load_checkpoint(dir / "f.ckpt") == fsnap);

  CHECK_THROWS_AS(model::load_checkpoint(dir / "missing.ckpt"), DataError);
  {
    std::ofstream junk(dir / "junk.ckpt", std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(model::load_checkpoint(dir / "junk.ckpt"), DataError);
}

TEST_CASE("embedding is the spatial mean of the bottleneck feature map") {
  UNet<double> net({}, 4);
  const auto x = testing::random_tensor<double>({3, 1, 32, 32}, 5);
  const auto out = net.forward(x);
  const auto emb = model::extract_embedding(net, x);
  REQUIRE(emb.shape() == Shape4{3, net.embedding_dim(), 1, 1});
  const auto& m = out.bottleneck_map;
  for (int n = 0; n < m.n(); ++n) {
    for (int c = 0; c < m.c(); ++c) {
      double sum = 0.0;
      for (int y = 0; y < m.h(); ++y) {
        for (int xx = 0; xx < m.w(); ++xx) sum += m(n, c, y, xx);
      }
      CHECK(emb(n, c, 0, 0) == doctest::Approx(sum / (m.h() * m.w())).epsilon(1e-12));
    }
  }
  CHECK(model::extract_embedding(net, x) == emb);
}

TEST_CASE("softmax over channels") {
  Tensor<double> logits(1, 2, 1, 2);
  logits(0, 0, 0, 0) = 0.0;
  logits(0, 1, 0, 0) = 0.0;
  logits(0, 0, 0, 1) = 1000.0;
  logits(0, 1, 0, 1) = 0.0;
  const auto p = model::softmax_channels(logits);
  CHECK(p(0, 0, 0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 1, 0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 0, 0, 1) == doctest::Approx(1.0));
  CHECK(p(0, 1, 0, 1) == doctest::Approx(0.0));
}

namespace {

// Scalar loss of a double network used for finite differences: the masked
// consistency objective against fixed random targets.
struct GradFixture {
  UNet<double> net{{.base_width = 4}, 21};
  Tensor<double> x = testing::random_tensor<double>({2, 1, 16, 16}, 22);
  Tensor<int32_t> labels{2, 1, 16, 16};
  Tensor<double> target = testing::random_tensor<double>({2, 2, 16, 16}, 23, -1.0, 1.0);
  pseudolabel::Masks masks{Tensor<uint8_t>(2, 1, 16, 16), Tensor<uint8_t>(2, 2, 16, 16)};
  objective::LossConfig cfg;

  GradFixture() {
    std::mt19937_64 rng(24);
    for (auto& v : labels.values()) v = static_cast<int32_t>(rng() % 2);
    for (auto& v : masks.p.values()) v = rng() % 5 != 0;
    for (auto& v : masks.f.values()) v = rng() % 5 != 0;
  }

  double loss() const {
    const auto out = net.forward(x);
    return objective::consistency_loss(out.class_logits, out.flow, labels, target, masks, cfg)
        .loss.total;
  }
};

}  // namespace

TEST_CASE("parameter gradients match central finite differences") {
  GradFixture f;
  f.net.zero_grad();
  UNet<double>::Tape tape;
  const auto out = f.net.forward_train(f.x, tape);
  const auto res =
      objective::consistency_loss(out.class_logits, out.flow, f.labels, f.target, f.masks, f.cfg);
  f.net.backward(tape, res.d_logits, res.d_flow);

  std::mt19937_64 rng(25);
  const double h = 1e-6;
  int checked = 0;
  for (auto& p : f.net.parameters()) {
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = rng() % p.value.size();
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = f.loss();
      p.value[i] = orig - h;
      const double down = f.loss();
      p.value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad[i];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      INFO(p.name << "[" << i << "] analytic " << analytic << " numeric " << numeric);
      CHECK(std::abs(analytic - numeric) / scale < 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("one optimizer step changes the snapshot") {
  GradFixture f;
  const auto theta0 = f.net.snapshot();
  f.net.zero_grad();
  UNet<double>::Tape tape;
  const auto out = f.net.forward_train(f.x, tape);
  const auto res =
      objective::consistency_loss(out.class_logits, out.flow, f.labels, f.target, f.masks, f.cfg);
  REQUIRE(res.loss.total > 0.0);
  f.net.backward(tape, res.d_logits, res.d_flow);
  train::AdamW<double> opt;
  opt.step(f.net.parameters(), 1e-3);
  const auto after = f.net.snapshot();
  bool differs = false;
  for (std::size_t i = 0; i < after.entries.size(); ++i) {
    differs = differs || after.entries[i].values != theta0.entries[i].values;
  }
  CHECK(differs);
}
