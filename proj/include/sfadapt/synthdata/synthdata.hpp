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
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfadapt/instances/instances.hpp"
#include "sfadapt/tensor.hpp"

namespace sfadapt::synthdata {

using Range = std::pair<double, double>;

// Parameters of a synthetic fluorescence-like domain. Source and target
// domains are two specs; the shift fields are zero/neutral for a source.
struct DomainSpec {
  int height = 32;
  int width = 32;
  std::pair<int, int> cell_count_range{3, 6};
  Range radius_range{3.0, 4.5};        // equal-area radius, px
  Range ellipticity_range{1.0, 1.4};   // major / minor axis ratio
  Range intensity_fg{0.55, 0.85};
  Range intensity_bg{0.05, 0.15};
  double texture_noise_sigma = 0.02;
  double blur_sigma = 0.6;
  int min_gap = 1;  // background pixels kept between instances
  int max_attempts = 500;

  // Domain shift.
  bool invert = false;
  double haze_level = 0.0;        // peak of a smooth additive background field
  double elongation = 1.0;        // multiplies the axis ratio
  double clutter_density = 0.0;   // non-cell debris spots per 1000 px

  void validate() const;
};

void to_json(nlohmann::json& j, const DomainSpec& s);
void from_json(const nlohmann::json& j, DomainSpec& s);

struct Sample {
  Tensor<float> image;                  // 1 x 1 x H x W in [0, 1]
  instances::InstanceLabeling instances;
  Tensor<float> class_target;           // 1 x 1 x H x W, 1 on instances
  Tensor<float> flow_target;            // 1 x 2 x H x W
  uint64_t seed = 0;
  std::string name;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool labeled() const;
  // N x 1 x H x W stacks; all samples must share a size.
  Tensor<float> images() const;
  Tensor<float> flow_targets() const;
  std::vector<instances::InstanceLabeling> labelings() const;
  Dataset subset(std::size_t first, std::size_t count) const;
};

// Unit-capped vectors from each instance pixel toward its instance centroid,
// zero on background. 1 x 2 x H x W.
Tensor<float> centroid_flow(const instances::InstanceLabeling& labels);

Sample make_sample(const Tensor<float>& image, const instances::InstanceLabeling& labels);

// Deterministic in (spec, n, seed); sample i uses its own derived seed.
// Throws DataError when instances cannot be placed.
Dataset generate(const DomainSpec& spec, int n, uint64_t seed);
Sample generate_one(const DomainSpec& spec, uint64_t sample_seed);

uint64_t derive_seed(uint64_t base, uint64_t index);

// Per-image 1st..99th percentile scaling to [0, 1]; constant images map to 0.
std::vector<float> percentile_normalize(const std::vector<double>& raw);

// Reads the PNG images in image_dir and, when mask_dir is given, the masks of
// the same file names. Images get percentile_normalize(); masks with gaps in
// their ids are renumbered. TIFF files raise DataError.
Dataset ingest(const std::filesystem::path& image_dir,
               const std::filesystem::path& mask_dir = {});

// Writes images/<name>.png (16-bit, round(v * 65535)), masks/<name>.png
// (16-bit ids) and manifest.json.
void export_dataset(const Dataset& data, const std::filesystem::path& dir,
                    const nlohmann::json& manifest);
// Loads <dir>/images and <dir>/masks when it exists.
Dataset load_dataset(const std::filesystem::path& dir, bool with_masks = true);

instances::InstanceLabeling read_labeling(const std::filesystem::path& path);
void write_labeling(const instances::InstanceLabeling& l, const std::filesystem::path& path);

}  // namespace sfadapt::synthdata
