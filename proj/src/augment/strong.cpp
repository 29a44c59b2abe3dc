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

#include "sfadapt/augment/strong.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sfadapt/errors.hpp"

namespace sfadapt::augment {

namespace {

void check_range(const Range& r, const char* name) {
  if (!(r.first <= r.second) || !std::isfinite(r.first) || !std::isfinite(r.second)) {
    throw ConfigError(std::string("strong augmentation: empty range for ") + name);
  }
}

double draw(const Range& r, std::mt19937_64& rng) {
  if (r.first == r.second) return r.first;
  return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

void StrongAugConfig::validate() const {
  check_range(gamma_range, "gamma");
  check_range(contrast_range, "contrast");
  check_range(blur_sigma_range, "blur_sigma");
  check_range(noise_sigma_range, "noise_sigma");
  if (gamma_range.first <= 0.0) throw ConfigError("strong augmentation: gamma must be > 0");
  if (contrast_range.first < 0.0 || blur_sigma_range.first < 0.0 ||
      noise_sigma_range.first < 0.0) {
    throw ConfigError("strong augmentation: ranges must be nonnegative");
  }
}

StrongAugConfig StrongAugConfig::identity() {
  StrongAugConfig c;
  c.gamma_range = {1.0, 1.0};
  c.contrast_range = {1.0, 1.0};
  c.blur_sigma_range = {0.0, 0.0};
  c.noise_sigma_range = {0.0, 0.0};
  return c;
}

void to_json(nlohmann::json& j, const StrongAugConfig& c) {
  j = {{"gamma_range", {c.gamma_range.first, c.gamma_range.second}},
       {"contrast_range", {c.contrast_range.first, c.contrast_range.second}},
       {"blur_sigma_range", {c.blur_sigma_range.first, c.blur_sigma_range.second}},
       {"noise_sigma_range", {c.noise_sigma_range.first, c.noise_sigma_range.second}},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, StrongAugConfig& c) {
  auto range = [&](const char* key, Range& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) {
      throw ConfigError(std::string("strong augmentation: ") + key + " must be [lo, hi]");
    }
    r = {v[0].get<double>(), v[1].get<double>()};
  };
  for (const auto& [key, _] : j.items()) {
    if (key != "gamma_range" && key != "contrast_range" && key != "blur_sigma_range" &&
        key != "noise_sigma_range" && key != "seed") {
      throw ConfigError("strong augmentation: unknown key '" + key + "'");
    }
  }
  range("gamma_range", c.gamma_range);
  range("contrast_range", c.contrast_range);
  range("blur_sigma_range", c.blur_sigma_range);
  range("noise_sigma_range", c.noise_sigma_range);
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  c.validate();
}

StrongAugParams sample_strong_params(const StrongAugConfig& cfg, std::mt19937_64& rng) {
  StrongAugParams p;
  p.gamma = draw(cfg.gamma_range, rng);
  p.contrast = draw(cfg.contrast_range, rng);
  p.blur_sigma = draw(cfg.blur_sigma_range, rng);
  p.noise_sigma = draw(cfg.noise_sigma_range, rng);
  return p;
}

template <class T>
void gaussian_blur_inplace(T* plane, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;

  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * plane[y * w + reflect(x + i, w)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[reflect(y + i, h) * w + x];
      plane[y * w + x] = static_cast<T>(acc);
    }
  }
}

template <class T>
Tensor<T> strong_augment(const Tensor<T>& images, const StrongAugConfig& cfg,
                         std::mt19937_64& rng) {
  cfg.validate();
  if (!images.all_finite()) throw NumericError("strong_augment: non-finite input");
  for (T v : images.values()) {
    if (v < T(0) || v > T(1)) throw DataError("strong_augment: input outside [0, 1]");
  }
  Tensor<T> out = images;
  const std::size_t hw = images.shape().plane();
  for (int n = 0; n < out.n(); ++n) {
    const StrongAugParams p = sample_strong_params(cfg, rng);
    for (int c = 0; c < out.c(); ++c) {
      T* px = out.plane(n, c);
      if (p.gamma != 1.0) {
        for (std::size_t i = 0; i < hw; ++i) {
          px[i] = static_cast<T>(std::pow(std::clamp<double>(px[i], 0.0, 1.0), p.gamma));
        }
      }
      if (p.contrast != 1.0) {
        double mean = 0.0;
        for (std::size_t i = 0; i < hw; ++i) mean += px[i];
        mean /= static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) {
          px[i] = static_cast<T>((px[i] - mean) * p.contrast + mean);
        }
      }
      gaussian_blur_inplace(px, out.h(), out.w(), p.blur_sigma);
      if (p.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, p.noise_sigma);
        for (std::size_t i = 0; i < hw; ++i) px[i] = static_cast<T>(px[i] + noise(rng));
      }
      for (std::size_t i = 0; i < hw; ++i) px[i] = std::clamp(px[i], T(0), T(1));
    }
  }
  return out;
}

template Tensor<float> strong_augment(const Tensor<float>&, const StrongAugConfig&, std::mt19937_64&);
template Tensor<double> strong_augment(const Tensor<double>&, const StrongAugConfig&, std::mt19937_64&);
template void gaussian_blur_inplace(float*, int, int, double);
template void gaussian_blur_inplace(double*, int, int, double);

}  // namespace sfadapt::augment
