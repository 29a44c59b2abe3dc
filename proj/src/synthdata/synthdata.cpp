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

#include "sfadapt/synthdata/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include "sfadapt/augment/strong.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/synthdata/image_io.hpp"

namespace sfadapt::synthdata {

namespace fs = std::filesystem;
using instances::InstanceLabeling;

namespace {

double draw(const Range& r, std::mt19937_64& rng) {
  if (r.first == r.second) return r.first;
  return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}

void check_range(const Range& r, const char* name, double min_value) {
  if (!(r.first <= r.second) || r.first < min_value) {
    throw ConfigError(std::string("domain spec: invalid ") + name + " range");
  }
}

struct Ellipse {
  double cx, cy, a, b, theta;

  // Squared normalized radius; <= 1 inside.
  double rho2(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(theta), s = std::sin(theta);
    const double p = (dx * c + dy * s) / a, q = (-dx * s + dy * c) / b;
    return p * p + q * q;
  }
};

}  // namespace

void DomainSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("domain spec: image too small");
  if (cell_count_range.first < 0 || cell_count_range.first > cell_count_range.second) {
    throw ConfigError("domain spec: invalid cell_count_range");
  }
  check_range(radius_range, "radius", 1e-9);
  check_range(ellipticity_range, "ellipticity", 1.0);
  check_range(intensity_fg, "intensity_fg", 0.0);
  check_range(intensity_bg, "intensity_bg", 0.0);
  if (texture_noise_sigma < 0 || blur_sigma < 0 || haze_level < 0 || clutter_density < 0 ||
      min_gap < 0 || max_attempts < 1) {
    throw ConfigError("domain spec: negative parameter");
  }
  if (elongation < 1.0) throw ConfigError("domain spec: elongation must be >= 1");
}

void to_json(nlohmann::json& j, const DomainSpec& s) {
  j = {{"height", s.height},
       {"width", s.width},
       {"cell_count_range", {s.cell_count_range.first, s.cell_count_range.second}},
       {"radius_range", {s.radius_range.first, s.radius_range.second}},
       {"ellipticity_range", {s.ellipticity_range.first, s.ellipticity_range.second}},
       {"intensity_fg", {s.intensity_fg.first, s.intensity_fg.second}},
       {"intensity_bg", {s.intensity_bg.first, s.intensity_bg.second}},
       {"texture_noise_sigma", s.texture_noise_sigma},
       {"blur_sigma", s.blur_sigma},
       {"min_gap", s.min_gap},
       {"max_attempts", s.max_attempts},
       {"invert", s.invert},
       {"haze_level", s.haze_level},
       {"elongation", s.elongation},
       {"clutter_density", s.clutter_density}};
}

void from_json(const nlohmann::json& j, DomainSpec& s) {
  auto range = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2) throw ConfigError("domain spec: " + key + " must be [lo, hi]");
    return Range{v[0].get<double>(), v[1].get<double>()};
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "height") s.height = v.get<int>();
    else if (key == "width") s.width = v.get<int>();
    else if (key == "cell_count_range") {
      const Range r = range(v, key);
      s.cell_count_range = {static_cast<int>(r.first), static_cast<int>(r.second)};
    } else if (key == "radius_range") s.radius_range = range(v, key);
    else if (key == "ellipticity_range") s.ellipticity_range = range(v, key);
    else if (key == "intensity_fg") s.intensity_fg = range(v, key);
    else if (key == "intensity_bg") s.intensity_bg = range(v, key);
    else if (key == "texture_noise_sigma") s.texture_noise_sigma = v.get<double>();
    else if (key == "blur_sigma") s.blur_sigma = v.get<double>();
    else if (key == "min_gap") s.min_gap = v.get<int>();
    else if (key == "max_attempts") s.max_attempts = v.get<int>();
    else if (key == "invert") s.invert = v.get<bool>();
    else if (key == "haze_level") s.haze_level = v.get<double>();
    else if (key == "elongation") s.elongation = v.get<double>();
    else if (key == "clutter_density") s.clutter_density = v.get<double>();
    else throw ConfigError("domain spec: unknown key '" + key + "'");
  }
  s.validate();
}

bool Dataset::labeled() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(),
                     [](const Sample& s) { return !s.flow_target.empty(); });
}

Tensor<float> Dataset::images() const {
  std::vector<Tensor<float>> parts;
  parts.reserve(samples.size());
  for (const auto& s : samples) parts.push_back(s.image);
  return concat_items<float>(parts);
}

Tensor<float> Dataset::flow_targets() const {
  std::vector<Tensor<float>> parts;
  parts.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.flow_target.empty()) throw DataError("dataset: sample '" + s.name + "' is unlabeled");
    parts.push_back(s.flow_target);
  }
  return concat_items<float>(parts);
}

std::vector<InstanceLabeling> Dataset::labelings() const {
  std::vector<InstanceLabeling> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.flow_target.empty()) throw DataError("dataset: sample '" + s.name + "' is unlabeled");
    out.push_back(s.instances);
  }
  return out;
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
  if (first + count > samples.size()) throw DataError("dataset: subset out of range");
  Dataset d;
  d.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(first),
                   samples.begin() + static_cast<std::ptrdiff_t>(first + count));
  return d;
}

uint64_t derive_seed(uint64_t base, uint64_t index) {
  // splitmix64 finalizer over the combined state.
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor<float> centroid_flow(const InstanceLabeling& labels) {
  const int k = labels.count();
  std::vector<double> sx(k + 1, 0.0), sy(k + 1, 0.0), cnt(k + 1, 0.0);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const int id = labels.at(y, x);
      if (id <= 0) continue;
      sx[id] += x;
      sy[id] += y;
      cnt[id] += 1.0;
    }
  }
  Tensor<float> flow(1, 2, labels.height, labels.width);
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const int id = labels.at(y, x);
      if (id <= 0) continue;
      double dx = sx[id] / cnt[id] - x, dy = sy[id] / cnt[id] - y;
      const double len = std::hypot(dx, dy);
      if (len > 1.0) {
        dx /= len;
        dy /= len;
      }
      flow(0, 0, y, x) = static_cast<float>(dx);
      flow(0, 1, y, x) = static_cast<float>(dy);
    }
  }
  return flow;
}

Sample make_sample(const Tensor<float>& image, const InstanceLabeling& labels) {
  if (image.n() != 1 || image.c() != 1 || image.h() != labels.height ||
      image.w() != labels.width) {
    throw ShapeError("make_sample: image " + image.shape().str() + " does not match mask");
  }
  Sample s;
  s.image = image;
  s.instances = labels;
  s.class_target = Tensor<float>(1, 1, labels.height, labels.width);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    s.class_target.data()[i] = labels.labels[i] > 0 ? 1.0f : 0.0f;
  }
  s.flow_target = centroid_flow(labels);
  return s;
}

Sample generate_one(const DomainSpec& spec, uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  const int H = spec.height, W = spec.width;
  InstanceLabeling labels(H, W);
  std::vector<Ellipse> cells;
  std::vector<double> cell_intensity;

  // Occupancy dilated by min_gap, for the non-overlap test.
  std::vector<char> blocked;
  const int count = std::uniform_int_distribution<int>(spec.cell_count_range.first,
                                                       spec.cell_count_range.second)(rng);
  // Sequential placement can paint itself into a corner; a failed layout is
  // restarted from scratch a bounded number of times.
  constexpr int kLayoutRestarts = 20;
  bool layout_ok = count == 0;
  for (int restart = 0; restart < kLayoutRestarts && !layout_ok; ++restart) {
    labels = InstanceLabeling(H, W);
    cells.clear();
    cell_intensity.clear();
    blocked.assign(static_cast<std::size_t>(H) * W, 0);
    layout_ok = true;
    for (int c = 0; c < count && layout_ok; ++c) {
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
        const double r = draw(spec.radius_range, rng);
        const double e = draw(spec.ellipticity_range, rng) * spec.elongation;
        Ellipse el{0, 0, r * std::sqrt(e), r / std::sqrt(e),
                   std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng)};
        const double margin = el.a + 0.5;
        if (2 * margin >= W - 1 || 2 * margin >= H - 1) continue;
        el.cx = std::uniform_real_distribution<double>(margin, W - 1 - margin)(rng);
        el.cy = std::uniform_real_distribution<double>(margin, H - 1 - margin)(rng);

        std::vector<int> pixels;
        bool clash = false;
        const int x0 = static_cast<int>(std::floor(el.cx - el.a)), x1 = static_cast<int>(std::ceil(el.cx + el.a));
        const int y0 = static_cast<int>(std::floor(el.cy - el.a)), y1 = static_cast<int>(std::ceil(el.cy + el.a));
        for (int y = std::max(0, y0); y <= std::min(H - 1, y1) && !clash; ++y) {
          for (int x = std::max(0, x0); x <= std::min(W - 1, x1); ++x) {
            if (el.rho2(x, y) > 1.0) continue;
            if (blocked[static_cast<std::size_t>(y) * W + x]) {
              clash = true;
              break;
            }
            pixels.push_back(y * W + x);
          }
        }
        if (clash || pixels.size() < 4) continue;
        const int id = static_cast<int>(cells.size()) + 1;
        for (int p : pixels) {
          labels.labels[p] = id;
          const int py = p / W, px = p % W;
          for (int dy = -spec.min_gap; dy <= spec.min_gap; ++dy) {
            for (int dx = -spec.min_gap; dx <= spec.min_gap; ++dx) {
              const int ny = py + dy, nx = px + dx;
              if (ny >= 0 && ny < H && nx >= 0 && nx < W) blocked[static_cast<std::size_t>(ny) * W + nx] = 1;
            }
          }
        }
        cells.push_back(el);
        cell_intensity.push_back(draw(spec.intensity_fg, rng));
        placed = true;
      }
      layout_ok = placed;
    }
  }
  if (!layout_ok) {
    throw DataError("synthdata: could not place " + std::to_string(count) + " cells after " +
                    std::to_string(kLayoutRestarts) + " layouts of " +
                    std::to_string(spec.max_attempts) + " attempts per cell (spec too dense)");
  }

  const double bg = draw(spec.intensity_bg, rng);
  std::vector<double> img(static_cast<std::size_t>(H) * W, bg);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int id = labels.at(y, x);
      if (id <= 0) continue;
      const double rho2 = cells[id - 1].rho2(x, y);
      img[static_cast<std::size_t>(y) * W + x] = bg + (cell_intensity[id - 1] - bg) * (1.0 - 0.35 * rho2);
    }
  }

  if (spec.clutter_density > 0.0) {
    std::poisson_distribution<int> pois(spec.clutter_density * H * W / 1000.0);
    const int spots = pois(rng);
    for (int s = 0; s < spots; ++s) {
      const double sx = std::uniform_real_distribution<double>(0.0, W - 1.0)(rng);
      const double sy = std::uniform_real_distribution<double>(0.0, H - 1.0)(rng);
      const double sigma = std::uniform_real_distribution<double>(0.6, 1.0)(rng);
      const double amp = draw(spec.intensity_fg, rng) - bg;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
          if (d2 > 16.0 * sigma * sigma) continue;
          img[static_cast<std::size_t>(y) * W + x] += amp * std::exp(-0.5 * d2 / (sigma * sigma));
        }
      }
    }
  }

  if (spec.haze_level > 0.0) {
    std::vector<double> haze(img.size(), 0.0);
    for (int b = 0; b < 3; ++b) {
      const double hx = std::uniform_real_distribution<double>(0.0, W - 1.0)(rng);
      const double hy = std::uniform_real_distribution<double>(0.0, H - 1.0)(rng);
      const double s = std::uniform_real_distribution<double>(0.25, 0.5)(rng) * W;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double d2 = (x - hx) * (x - hx) + (y - hy) * (y - hy);
          haze[static_cast<std::size_t>(y) * W + x] += std::exp(-0.5 * d2 / (s * s));
        }
      }
    }
    const double peak = *std::max_element(haze.begin(), haze.end());
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += spec.haze_level * haze[i] / peak;
  }

  if (spec.texture_noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.texture_noise_sigma);
    for (auto& v : img) v += noise(rng);
  }
  augment::gaussian_blur_inplace(img.data(), H, W, spec.blur_sigma);
  if (spec.invert) {
    for (auto& v : img) v = 1.0 - v;
  }

  Tensor<float> image(1, 1, H, W);
  for (std::size_t i = 0; i < img.size(); ++i) {
    image.data()[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  }
  Sample s = make_sample(image, labels);
  s.seed = sample_seed;
  return s;
}

Dataset generate(const DomainSpec& spec, int n, uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("synthdata: sample count must be >= 1");
  Dataset d;
  d.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Sample s = generate_one(spec, derive_seed(seed, static_cast<uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05d", i);
    s.name = name;
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<float> percentile_normalize(const std::vector<double>& raw) {
  std::vector<float> out(raw.size(), 0.0f);
  if (raw.empty()) return out;
  std::vector<double> sorted = raw;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double p) {
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double lo = pct(1.0), hi = pct(99.0);
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>(std::clamp((raw[i] - lo) / (hi - lo), 0.0, 1.0));
  }
  return out;
}

InstanceLabeling read_labeling(const fs::path& path) {
  const GrayImage img = read_png_gray(path);
  InstanceLabeling l(img.height, img.width);
  std::copy(img.pixels.begin(), img.pixels.end(), l.labels.begin());
  return l;
}

void write_labeling(const InstanceLabeling& l, const fs::path& path) {
  std::vector<uint16_t> px(l.labels.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (l.labels[i] < 0 || l.labels[i] > 65535) throw DataError("write_labeling: id exceeds 16 bits");
    px[i] = static_cast<uint16_t>(l.labels[i]);
  }
  write_png_gray16(path, l.height, l.width, px);
}

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
      files.push_back(e.path());
    } else if (ext == ".tif" || ext == ".tiff") {
      throw DataError("TIFF input is not supported, convert to PNG: " + e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset read_images(const fs::path& image_dir, const fs::path& mask_dir, bool unit_scale) {
  if (!fs::is_directory(image_dir)) throw DataError("not a directory: " + image_dir.string());
  Dataset d;
  const auto files = list_pngs(image_dir);
  if (files.empty()) {
    std::cerr << "warning: no images found in " << image_dir << "\n";
    return d;
  }
  for (const auto& f : files) {
    const GrayImage img = read_png_gray(f);
    Tensor<float> image(1, 1, img.height, img.width);
    if (unit_scale) {
      const double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
      for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        image.data()[i] = static_cast<float>(img.pixels[i] / scale);
      }
    } else {
      const std::vector<double> raw(img.pixels.begin(), img.pixels.end());
      image.values() = percentile_normalize(raw);
    }
    Sample s;
    if (!mask_dir.empty()) {
      const fs::path mpath = mask_dir / f.filename();
      if (!fs::exists(mpath)) throw DataError("missing mask for " + f.string());
      const InstanceLabeling l = read_labeling(mpath);
      if (l.height != img.height || l.width != img.width) {
        throw DataError("image/mask shape mismatch for " + f.filename().string());
      }
      // Valid contiguous ids are kept as stored so masks round-trip exactly.
      bool contiguous = true;
      try {
        instances::validate(l);
      } catch (const DataError&) {
        contiguous = false;
      }
      s = make_sample(image, contiguous ? l : instances::relabel_contiguous(l));
    } else {
      s.image = std::move(image);
    }
    s.name = f.stem().string();
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace

Dataset ingest(const fs::path& image_dir, const fs::path& mask_dir) {
  return read_images(image_dir, mask_dir, false);
}

void export_dataset(const Dataset& data, const fs::path& dir, const nlohmann::json& manifest) {
  fs::create_directories(dir / "images");
  const bool labeled = data.labeled();
  if (labeled) fs::create_directories(dir / "masks");
  for (const auto& s : data.samples) {
    std::vector<uint16_t> px(s.image.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<uint16_t>(std::lround(std::clamp(s.image.data()[i], 0.0f, 1.0f) * 65535.0));
    }
    write_png_gray16(dir / "images" / (s.name + ".png"), s.image.h(), s.image.w(), px);
    if (labeled) write_labeling(s.instances, dir / "masks" / (s.name + ".png"));
  }
  nlohmann::json m = manifest;
  m["count"] = data.size();
  m["labeled"] = labeled;
  m["intensity"] = "unit";
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << "\n";
  if (!os) throw DataError("cannot write manifest in " + dir.string());
}

Dataset load_dataset(const fs::path& dir, bool with_masks) {
  bool unit = false;
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream is(dir / "manifest.json");
    try {
      const auto m = nlohmann::json::parse(is);
      unit = m.value("intensity", std::string()) == "unit";
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad manifest in " + dir.string() + ": " + e.what());
    }
  }
  const fs::path masks = dir / "masks";
  return read_images(dir / "images", with_masks && fs::is_directory(masks) ? masks : fs::path{}, unit);
}

}  // namespace sfadapt::synthdata
