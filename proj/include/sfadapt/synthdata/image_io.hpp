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
#include <vector>

namespace sfadapt::synthdata {

struct GrayImage {
  int height = 0;
  int width = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<uint16_t> pixels;
};

// Reads an 8- or 16-bit PNG. Color images are rejected.
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, int height, int width,
                      const std::vector<uint16_t>& pixels);
// Interleaved RGB, 8 bits per channel.
void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::vector<uint8_t>& rgb);

}  // namespace sfadapt::synthdata
