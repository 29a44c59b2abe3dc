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
#include <random>
#include <utility>

#include <nlohmann/json.hpp>

#include "sfadapt/tensor.hpp"

namespace sfadapt::augment {

using Range = std::pair<double, double>;

// Photometric perturbations applied to the student's view. Parameters are
// drawn uniformly from each range per image.
struct StrongAugConfig {
  Range gamma_range{0.7, 1.3};
  Range contrast_range{0.7, 1.3};
  Range blur_sigma_range{0.0, 1.5};   // pixels
  Range noise_sigma_range{0.0, 0.05};  // fraction of the [0, 1] range
  uint64_t seed = 0;

  // Throws ConfigError on empty/negative ranges.
  void validate() const;
  static StrongAugConfig identity();
};

void to_json(nlohmann::json& j, const StrongAugConfig& c);
void from_json(const nlohmann::json& j, StrongAugConfig& c);

struct StrongAugParams {
  double gamma = 1.0;
  double contrast = 1.0;
  double blur_sigma = 0.0;
  double noise_sigma = 0.0;
};

StrongAugParams sample_strong_params(const StrongAugConfig& cfg, std::mt19937_64& rng);

// Gamma, contrast about the image mean, Gaussian blur (reflect padding,
// radius ceil(3 sigma)), additive Gaussian noise, then clip to [0, 1].
// Each step is skipped when its parameter is the identity value, so the
// identity configuration returns the input unchanged. Pixel grid untouched.
template <class T>
Tensor<T> strong_augment(const Tensor<T>& images, const StrongAugConfig& cfg,
                         std::mt19937_64& rng);

template <class T>
void gaussian_blur_inplace(T* plane, int h, int w, double sigma);

}  // namespace sfadapt::augment
