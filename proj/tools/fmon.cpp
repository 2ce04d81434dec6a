// Copyright 2026 The fmon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "fmon/error.hpp"
#include "fmon/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run(const std::string& command, const Flags& flags) {
  nlohmann::json doc = nlohmann::json::object();
  if (!flags.config.empty()) {
    std::ifstream in(flags.config, std::ios::binary);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw fmon::UsageError("config " + flags.config + ": " + e.what());
    }
    if (!doc.is_object()) throw fmon::UsageError("config " + flags.config + ": expected a JSON object");
  }
  // Applied before parsing so that pool defaults see the right data source.
  if (!flags.data.empty()) {
    doc.erase("synthetic");
    doc["data"] = flags.data;
  }
  fmon::RunConfig config = fmon::parse_run_config(doc.dump());
  if (!flags.out.empty()) config.out = flags.out;
  if (flags.seed) config.seed = *flags.seed;
  fmon::run_command(command, config);
  std::cerr << command << ": reports written to " << config.out << " (fingerprint "
            << fmon::config_fingerprint(config) << ")\n";
  return fmon::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forecast monitoring: error prediction, model ranking, dynamic selection and alerting"};
  app.require_subcommand(1);
  Flags flags;
  std::string command;
  const std::pair<const char*, const char*> commands[] = {
      {"generate", "Write a synthetic dataset as CSV"},
      {"evaluate", "RMSE of monitor-predicted vs realized sMAPE, against the holdout baseline"},
      {"rank", "True, predicted and baseline model rankings with Wilcoxon flags"},
      {"simulate", "Per-period sMAPE of dynamic selection and of every fixed model"},
      {"sentinel", "Threshold-based alerting with re-selection; writes the alert log"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--data", flags.data, "CSV dataset (overrides the configured data source)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
    sub->add_option("--seed", flags.seed, "Run seed (overrides the config)");
    sub->callback([&command, n = std::string(name)] { command = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fmon::kExitOk : fmon::kExitUsage;
  }

  try {
    return run(command, flags);
  } catch (const fmon::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return fmon::kExitUsage;
  } catch (const fmon::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return fmon::kExitData;
  } catch (const fmon::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return fmon::kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return fmon::kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return fmon::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fmon::kExitNumeric;
  }
}
