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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmon/data_io.hpp"
#include "fmon/dropout_net.hpp"
#include "fmon/forecasters.hpp"
#include "fmon/gaussian_process.hpp"
#include "fmon/monitor.hpp"
#include "fmon/selection.hpp"
#include "fmon/sentinel.hpp"
#include "fmon/series.hpp"

namespace fmon {

struct MonitorSettings {
  MonitorKind kind = MonitorKind::gp;
  GpTrainOptions gp;  // seed is derived per monitored model from the run seed
  DropoutTrainOptions dropout;
  std::size_t mc_samples = 100;
};

/// Everything a run depends on. Parsed from a single JSON document.
struct RunConfig {
  std::optional<std::string> data;           // CSV path; synthetic data otherwise
  std::optional<SyntheticConfig> synthetic;  // absent seed follows the run seed
  std::size_t horizon = 30;
  std::size_t feature_length = 128;
  double train_fraction = 0.75;
  MonitorSettings monitor;
  std::vector<ForecasterSpec> pool;
  std::size_t period = 10;
  ThresholdPolicy policy;
  std::optional<std::string> incumbent;  // default: lowest mean training error
  std::uint64_t seed = 0;
  std::string out = "out";

  void validate() const;
  SyntheticConfig synthetic_config() const;
};

/// The default pool: ses, holt, damp, theta, comb, rf, all with seasonal
/// period m.
std::vector<ForecasterSpec> default_pool(std::size_t m = 1);

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Sorted-key JSON of every field (defaults filled in) except the output
/// directory, so it changes exactly when the run would.
std::string canonical_config(const RunConfig& config);
std::string config_fingerprint(const RunConfig& config);

struct IngestionReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t min_length = 0;
  std::vector<std::string> dropped;  // too short after filling
};

/// A test series with the pool fitted up to its forecast origin.
struct TestSeries {
  TimeSeries series;  // gap-filled
  std::vector<double> y;
  std::size_t origin = 0;
  std::vector<FittedForecaster> fitted;        // pool order
  std::vector<std::vector<double>> forecasts;  // h steps from the origin
  std::vector<double> truth;                   // realized sMAPE per model
  std::vector<double> baseline;                // holdout baseline per model, NaN if it failed
};

struct HarnessOptions {
  /// Test hook: replace trained monitors by monitors that read the
  /// held-out actuals.
  bool oracle_monitors = false;
};

/// Shared state of a run: ingested data, the series split, the error
/// datasets and trained monitors, and the test series fitted at origin.
class Experiment {
 public:
  static Experiment prepare(const RunConfig& config, const HarnessOptions& options = {});

  /// Same data, split and fits, with the monitors replaced by the oracle.
  Experiment with_oracle_monitors() const;

  const RunConfig& config() const { return config_; }
  const IngestionReport& ingestion() const { return ingestion_; }
  const std::vector<ForecasterSpec>& pool() const { return pool_; }
  const std::vector<TimeSeries>& train_series() const { return train_; }
  const std::vector<TestSeries>& test_series() const { return tests_; }
  const std::vector<ErrorDataset>& datasets() const { return datasets_; }
  const std::vector<MonitorModel>& monitors() const { return monitors_; }
  const std::vector<SeriesFailure>& failures() const { return failures_; }
  const MonitorSet& monitor_set() const { return monitor_set_; }
  const std::string& fingerprint() const { return fingerprint_; }
  bool oracle() const { return oracle_; }

  /// The deployed model for sentinel runs.
  std::string incumbent() const;

 private:
  void attach_oracle();

  RunConfig config_;
  IngestionReport ingestion_;
  std::vector<ForecasterSpec> pool_;
  std::vector<TimeSeries> train_;
  std::vector<TestSeries> tests_;
  std::vector<ErrorDataset> datasets_;
  std::vector<MonitorModel> monitors_;
  std::vector<SeriesFailure> failures_;
  std::vector<std::unique_ptr<ErrorPredictor>> predictors_;
  MonitorSet monitor_set_;
  std::string fingerprint_;
  bool oracle_ = false;
};

std::vector<TimeSeries> load_series(const RunConfig& config);

struct ModelEvaluation {
  std::string model_id;
  std::size_t train_pairs = 0;
  std::size_t test_series = 0;
  double monitor_rmse = 0.0;
  double baseline_rmse = 0.0;
  std::vector<PredictedError> predicted;  // per test series
  std::vector<double> baseline;
  std::vector<double> truth;
};

/// Monitor and holdout-baseline predictions on every test series.
std::vector<ModelEvaluation> evaluate(const Experiment& experiment);

struct RankingTables {
  Ranking truth;
  Ranking predicted;
  Ranking baseline;
};

RankingTables rank(const std::vector<ModelEvaluation>& evaluation);

struct CurvePoint {
  std::size_t period = 0;  // 1-based
  std::string strategy;
  double mean = 0.0;
  double std = 0.0;
};

struct SimulationResult {
  std::vector<SelectionTrace> dynamic;
  std::map<std::string, std::vector<SelectionTrace>> fixed;
  std::vector<SelectionTrace> sentinel;  // only filled by run_sentinel_simulation
  std::vector<Alert> alerts;
  std::vector<CurvePoint> curve;
  std::map<std::string, double> overall;  // mean realized sMAPE over the horizon
};

SimulationResult simulate(const Experiment& experiment);
SimulationResult run_sentinel_simulation(const Experiment& experiment);

/// Runs a CLI command and writes its reports into config.out.
/// Commands: generate, evaluate, rank, simulate, sentinel.
void run_command(std::string_view command, const RunConfig& config, const HarnessOptions& options = {});

}  // namespace fmon
