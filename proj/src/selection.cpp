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

#include "fmon/selection.hpp"

#include <algorithm>
#include <numeric>

#include "fmon/error.hpp"
#include "fmon/wilcoxon.hpp"

namespace fmon {

std::vector<std::string> Ranking::order() const {
  std::vector<std::string> ids;
  for (const auto& e : entries) ids.push_back(e.model_id);
  return ids;
}

Ranking rank_models(const std::map<std::string, std::vector<double>>& per_model_values) {
  if (per_model_values.empty()) throw UsageError("rank_models: no models given");
  const std::size_t n = per_model_values.begin()->second.size();
  if (n == 0) throw UsageError("rank_models: models have no series");

  Ranking ranking;
  for (const auto& [id, values] : per_model_values) {
    if (values.size() != n)
      throw UsageError("rank_models: model '" + id + "' has " + std::to_string(values.size()) +
                       " series, expected " + std::to_string(n));
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    ranking.entries.push_back({id, mean, values});
  }
  // std::map iteration is already id-ordered, so a stable sort on the mean
  // leaves ties in lexicographic order.
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const RankingEntry& a, const RankingEntry& b) {
                     return a.mean_predicted_smape < b.mean_predicted_smape;
                   });
  for (std::size_t i = 0; i + 1 < ranking.entries.size(); ++i) {
    const auto test = wilcoxon_signed_rank(ranking.entries[i].per_series_values,
                                           ranking.entries[i + 1].per_series_values);
    ranking.adjacent_p_values.push_back(test.p_value);
    ranking.adjacent_significance.push_back(test.p_value < kSignificanceLevel);
  }
  return ranking;
}

Ranking rank_models(const std::map<std::string, std::vector<PredictedError>>& per_model_predictions) {
  std::map<std::string, std::vector<double>> means;
  for (const auto& [id, predictions] : per_model_predictions) {
    auto& v = means[id];
    for (const auto& p : predictions) v.push_back(p.mean);
  }
  return rank_models(means);
}

const std::string& select_best(const Ranking& ranking) {
  if (ranking.entries.empty()) throw UsageError("select_best: empty ranking");
  return ranking.entries.front().model_id;
}

double SelectionTrace::realized_smape() const { return smape(actuals, forecasts).value; }

std::string argmin_predicted(const std::map<std::string, PredictedError>& predicted) {
  if (predicted.empty()) throw UsageError("no predictions to choose from");
  auto best = predicted.begin();
  for (auto it = predicted.begin(); it != predicted.end(); ++it)
    if (it->second.mean < best->second.mean) best = it;
  return best->first;
}

SelectionTrace run_checkpoints(const TimeSeries& series, std::span<const FittedForecaster> pool,
                               const MonitorSet& monitors, std::size_t h, std::size_t period,
                               const ChooseModel& choose) {
  if (pool.empty()) throw UsageError("model selection needs a non-empty pool");
  if (period < 1 || period > h) throw UsageError("selection period must lie in [1, h]");
  const std::size_t origin = pool.front().observed_len;
  for (const auto& m : pool) {
    if (m.observed_len != origin) throw UsageError("pool members were fitted up to different origins");
    if (!monitors.contains(m.id())) throw UsageError("no monitor for pool member '" + m.id() + "'");
  }

  const std::vector<double> y = fill_missing_nearest_past(series).dense();
  if (y.size() < origin + h)
    throw DataError("series '" + series.id + "' ends before the selection horizon");

  SelectionTrace trace;
  trace.series_id = series.id;
  trace.actuals.assign(y.begin() + static_cast<std::ptrdiff_t>(origin),
                       y.begin() + static_cast<std::ptrdiff_t>(origin + h));

  std::vector<FittedForecaster> models(pool.begin(), pool.end());
  std::string incumbent;
  std::size_t last = 0;
  for (std::size_t t = 0, index = 0; t < h; t += period, ++index) {
    const std::span<const double> realized(y.data() + origin + last, t - last);
    if (!realized.empty())
      for (auto& m : models) m = update_state(m, realized);
    last = t;

    const std::size_t remaining = h - t;
    const std::size_t used = std::min(period, remaining);
    const std::span<const double> observed(y.data(), origin + t);

    Checkpoint cp;
    cp.time_step = origin + t;
    std::map<std::string, std::vector<double>> issued;
    for (const auto& m : models) {
      ForecastBundle f = forecast(m, remaining);
      PredictionQuery query{series.id, m.id(), observed, f.values, used};
      cp.predicted[m.id()] = monitors.find(m.id())->second->predict(query);
      issued[m.id()] = std::move(f.values);
    }
    cp.chosen = choose(index, cp.predicted, incumbent);
    auto chosen = issued.find(cp.chosen);
    if (chosen == issued.end()) throw UsageError("selection chose unknown model '" + cp.chosen + "'");
    incumbent = cp.chosen;

    trace.forecasts.insert(trace.forecasts.end(), chosen->second.begin(),
                           chosen->second.begin() + static_cast<std::ptrdiff_t>(used));
    trace.realized_smape_per_period.push_back(
        smape(std::span(trace.actuals.data() + t, used), std::span(chosen->second.data(), used)).value);
    trace.checkpoints.push_back(std::move(cp));
  }
  return trace;
}

SelectionTrace dynamic_select(const TimeSeries& series, std::span<const FittedForecaster> pool,
                              const MonitorSet& monitors, std::size_t h, std::size_t period) {
  return run_checkpoints(series, pool, monitors, h, period,
                         [](std::size_t, const std::map<std::string, PredictedError>& predicted,
                            const std::string&) { return argmin_predicted(predicted); });
}

}  // namespace fmon
