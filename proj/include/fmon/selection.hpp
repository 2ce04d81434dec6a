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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fmon/forecasters.hpp"
#include "fmon/monitor.hpp"
#include "fmon/series.hpp"

namespace fmon {

inline constexpr double kSignificanceLevel = 0.05;

struct RankingEntry {
  std::string model_id;
  double mean_predicted_smape = 0.0;
  std::vector<double> per_series_values;
};

/// Models in ascending order of mean predicted sMAPE (ties by id).
/// adjacent_significance[i] says whether entries i and i+1 differ at the
/// 5% level under a paired Wilcoxon signed-rank test.
struct Ranking {
  std::vector<RankingEntry> entries;
  std::vector<bool> adjacent_significance;
  std::vector<double> adjacent_p_values;

  std::vector<std::string> order() const;
};

Ranking rank_models(const std::map<std::string, std::vector<PredictedError>>& per_model_predictions);

// Convenience for rankings built from realized (ground truth) errors.
Ranking rank_models(const std::map<std::string, std::vector<double>>& per_model_values);

const std::string& select_best(const Ranking& ranking);

using MonitorSet = std::map<std::string, const ErrorPredictor*, std::less<>>;

struct Checkpoint {
  std::size_t time_step = 0;  // absolute step of the first forecast consumed
  std::string chosen;
  std::map<std::string, PredictedError> predicted;
};

struct SelectionTrace {
  std::string series_id;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> realized_smape_per_period;
  std::vector<double> forecasts;  // the consumed forecast path over the horizon
  std::vector<double> actuals;

  double realized_smape() const;
};

/// Decides which model to use at a checkpoint. `incumbent` is empty at the
/// first checkpoint.
using ChooseModel = std::function<std::string(std::size_t checkpoint_index,
                                              const std::map<std::string, PredictedError>& predicted,
                                              const std::string& incumbent)>;

/// Checkpoint loop shared by dynamic selection and the sentinel. At each
/// checkpoint t = 0, period, 2 period, ... < h every pool member absorbs the
/// observations realized since the previous checkpoint (frozen
/// parameters), forecasts the remaining h - t steps and is scored by its
/// monitor; `choose` picks the model whose forecasts are consumed until the
/// next checkpoint. Every pool member must have been fitted up to the same
/// origin and the series must extend h steps past it.
SelectionTrace run_checkpoints(const TimeSeries& series, std::span<const FittedForecaster> pool,
                               const MonitorSet& monitors, std::size_t h, std::size_t period,
                               const ChooseModel& choose);

// Lowest predicted mean wins; ties go to the lexicographically smaller id.
std::string argmin_predicted(const std::map<std::string, PredictedError>& predicted);

SelectionTrace dynamic_select(const TimeSeries& series, std::span<const FittedForecaster> pool,
                              const MonitorSet& monitors, std::size_t h, std::size_t period);

}  // namespace fmon
