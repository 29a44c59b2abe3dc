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
#include <vector>

namespace sfadapt::model {

struct ParamEntry {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> values;

  bool operator==(const ParamEntry&) const = default;
};

// Flat, ordered copy of a network's parameters. Values are held as doubles
// so that float and double networks share one snapshot type; float -> double
// -> float is exact.
struct ParamSnapshot {
  std::string architecture;
  int64_t iteration = 0;
  uint64_t seed = 0;
  std::vector<ParamEntry> entries;

  const ParamEntry* find(const std::string& name) const;
  std::size_t num_values() const;
  bool operator==(const ParamSnapshot&) const = default;
};

// Throws ArchitectureMismatch listing missing/extra/reshaped entries unless
// `other` has exactly the names and shapes of `reference`, in order.
void check_compatible(const ParamSnapshot& reference, const ParamSnapshot& other);

enum class StorageType : uint8_t { kFloat64 = 0, kFloat32 = 1 };

// Binary checkpoint. Layout (all integers little-endian):
//   magic "SFADCKPT", u32 version, u32 metadata length, metadata JSON,
//   u32 entry count, then per entry: u32 name length, name bytes,
//   u8 storage type, u32 rank, i64 dims[rank], raw little-endian values.
void save_checkpoint(const ParamSnapshot& snap, const std::filesystem::path& path,
                     StorageType storage = StorageType::kFloat64);
ParamSnapshot load_checkpoint(const std::filesystem::path& path);

inline constexpr uint32_t kCheckpointVersion = 1;

}  // namespace sfadapt::model
