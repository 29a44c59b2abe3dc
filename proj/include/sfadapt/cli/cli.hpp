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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sfadapt::cli {

inline constexpr const char* kVersion = "sfadapt 0.1.0";

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
  kGateFailure = 5,
};

// Flags shared by every subcommand; set flags override the config file.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> checkpoint;
};

// Reads the config file (an empty object when absent) and applies the flag
// overrides to the top-level keys seed/out/data/checkpoint.
nlohmann::json load_config(const CommonOptions& opts);

// Subcommands. Each validates its config (unknown keys are errors), writes
// resolved_config.json next to its outputs and throws sfadapt errors.
void cmd_gen_data(const nlohmann::json& cfg);
void cmd_pretrain(const nlohmann::json& cfg);
void cmd_adapt(const nlohmann::json& cfg);
void cmd_evaluate(const nlohmann::json& cfg);
void cmd_analyze_stopping(const nlohmann::json& cfg);

const std::vector<std::string>& command_names();

// Runs a subcommand by name and maps exceptions to exit codes.
int run(const std::string& command, const CommonOptions& opts);

// Reads SFADAPT_LOG_LEVEL (trace|debug|info|warn|error|off; default info).
void init_logging();

// Raised when a pretrained model misses its accuracy gate.
class GateFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfadapt::cli
