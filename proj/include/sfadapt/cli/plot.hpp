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

#include <filesystem>
#include <string>
#include <vector>

namespace sfadapt::cli {

struct Series {
  std::string label;
  std::vector<double> y;  // NaN entries are skipped
  unsigned char r, g, b;
};

// Line chart over a shared x axis, y scaled to [0, max(1, max y)], with
// optional vertical markers. Written as an 8-bit RGB PNG.
void write_line_plot(const std::filesystem::path& path, const std::vector<double>& x,
                     const std::vector<Series>& series, const std::vector<double>& markers,
                     int width = 640, int height = 360);

}  // namespace sfadapt::cli
