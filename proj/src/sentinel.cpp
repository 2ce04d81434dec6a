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

#include "fmon/sentinel.hpp"

#include <map>

#include "fmon/parallel.hpp"

namespace fmon {

void ThresholdPolicy::validate() const {
  if (!(smape_threshold >= 0.0 && smape_threshold <= 2.0))
    throw UsageError("sMAPE threshold must lie in [0, 2]");
  if (uncertainty_threshold && !(*uncertainty_threshold > 0.0))
    throw UsageError("uncertainty threshold must be positive");
  if (require_low_uncertainty && !uncertainty_threshold)
    throw UsageError("require_low_uncertainty needs an uncertainty threshold");
}

std::string_view to_string(Action action) {
  return action == Action::keep ? "keep" : "alert_and_reselect";
}

Action action_from_string(std::string_view name) {
  if (name == "keep") return Action::keep;
  if (name == "alert_and_reselect") return Action::alert_and_reselect;
  throw UsageError("unknown action '" + std::string(name) + "'");
}

Action monitor_step(const PredictedError& predicted, const ThresholdPolicy& policy) {
  if (policy.require_low_uncertainty) {
    if (!policy.uncertainty_threshold) throw UsageError("require_low_uncertainty needs an uncertainty threshold");
    if (!predicted.std)
      throw UsageError("policy requires an uncertainty estimate but the monitor provides none");
  }
  const bool high_error = predicted.mean > policy.smape_threshold;
  const bool confident = !policy.require_low_uncertainty || *predicted.std < *policy.uncertainty_threshold;
  return high_error && confident ? Action::alert_and_reselect : Action::keep;
}

SentinelRun run_sentinel(const TimeSeries& series, std::span<const FittedForecaster> pool,
                         const MonitorSet& monitors, std::size_t h, std::size_t period,
                         const ThresholdPolicy& policy, const std::string& incumbent) {
  policy.validate();
  if (std::none_of(pool.begin(), pool.end(), [&](const FittedForecaster& m) { return m.id() == incumbent; }))
    throw UsageError("incumbent '" + incumbent + "' is not in the pool");
  if (policy.require_low_uncertainty)
    for (const auto& m : pool) {
      auto it = monitors.find(m.id());
      if (it != monitors.end() && !it->second->probabilistic())
        throw UsageError("policy requires uncertainty but the monitor for '" + m.id() + "' provides none");
    }

  SentinelRun run;
  std::size_t origin = pool.empty() ? 0 : pool.front().observed_len;
  run.trace = run_checkpoints(
      series, pool, monitors, h, period,
      [&](std::size_t index, const std::map<std::string, PredictedError>& predicted, const std::string& current) {
        const std::string& deployed = index == 0 ? incumbent : current;
        const PredictedError& p = predicted.at(deployed);
        const Action action = monitor_step(p, policy);
        run.alerts.push_back({series.id, deployed, origin + index * period, p, policy, action});
        return action == Action::alert_and_reselect ? argmin_predicted(predicted) : deployed;
      });
  return run;
}

std::vector<SentinelRun> run_sentinel(std::span<const SentinelTask> tasks, const MonitorSet& monitors,
                                      std::size_t h, std::size_t period, const ThresholdPolicy& policy,
                                      std::vector<Alert>* merged_log) {
  std::vector<SentinelRun> runs(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    runs[i] = run_sentinel(tasks[i].series, tasks[i].pool, monitors, h, period, policy, tasks[i].incumbent);
  });
  if (merged_log) {
    merged_log->clear();
    for (const auto& r : runs) merged_log->insert(merged_log->end(), r.alerts.begin(), r.alerts.end());
    std::stable_sort(merged_log->begin(), merged_log->end(), [](const Alert& a, const Alert& b) {
      return a.series_id != b.series_id ? a.series_id < b.series_id : a.checkpoint < b.checkpoint;
    });
  }
  return runs;
}

}  // namespace fmon
