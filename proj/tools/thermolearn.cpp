// Copyright 2026 The thermolearn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// thermolearn command-line entry point.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "thermolearn/runner.hpp"

int main(int argc, char** argv) {
  namespace cli = thermolearn::cli;
  CLI::App app{"thermolearn: learning as a thermodynamic process, at desk scale"};
  app.require_subcommand(1);

  std::string config, preset, out;
  std::size_t threads = 0;
  for (const auto& name : cli::commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "flat key = value config file");
    sub->add_option("--preset", preset, "named preset (see README)");
    sub->add_option("--out", out, "run directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }

  cli::Invocation inv;
  inv.command = app.get_subcommands().front()->get_name();
  if (!config.empty()) inv.config_path = config;
  if (!preset.empty()) inv.preset = preset;
  if (!out.empty()) inv.out = out;
  if (threads > 0) inv.threads = threads;
  return cli::execute(inv, std::cout, std::cerr);
}
