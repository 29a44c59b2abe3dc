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

#include <CLI11.hpp>

#include "sfadapt/cli/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = sfadapt::cli;
  CLI::App app{"Source-free domain adaptation of a cell segmentation network", "sfadapt"};
  app.set_version_flag("--version", cli::kVersion);
  app.require_subcommand(1);

  cli::CommonOptions opts;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Generate a synthetic dataset with train/validation/test splits"},
      {"pretrain", "Train the source model and check its accuracy gate"},
      {"adapt", "Adapt a checkpoint to unlabeled target images"},
      {"evaluate", "Instance AP of a checkpoint on a labeled dataset"},
      {"analyze-stopping", "Recompute stopping metrics over a checkpoint series"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Random seed (overrides the config)");
    sub->add_option("--out", opts.out, "Output directory (overrides the config)");
    sub->add_option("--data", opts.data, "Dataset directory (overrides the config)");
    sub->add_option("--checkpoint", opts.checkpoint,
                    "Checkpoint file or directory (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kConfigError;
  }
  cli::init_logging();
  return cli::run(app.get_subcommands().front()->get_name(), opts);
}
