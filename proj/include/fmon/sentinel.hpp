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

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmon/error.hpp"
#include "fmon/forecasters.hpp"
#include "fmon/monitor.hpp"
#include "fmon/selection.hpp"

namespace fmon {

/// When to act on a predicted error: alert if the predicted sMAPE exceeds
/// smape_threshold and, when required, the prediction is confident
/// (std strictly below uncertainty_threshold).
struct ThresholdPolicy {
  double smape_threshold = 0.02;
  std::optional<double> uncertainty_threshold = 0.01;
  bool require_low_uncertainty = true;

  void validate() const;

  friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

enum class Action { keep, alert_and_reselect };

std::string_view to_string(Action action);
Action action_from_string(std::string_view name);

Action monitor_step(const PredictedError& predicted, const ThresholdPolicy& policy);

/// One logged sentinel decision about the incumbent model.
struct Alert {
  std::string series_id;
  std::string model_id;
  std::size_t checkpoint = 0;
  PredictedError predicted;
  ThresholdPolicy policy;
  Action action = Action::keep;

  friend bool operator==(const Alert&, const Alert&) = default;
};

struct SentinelRun {
  SelectionTrace trace;
  std::vector<Alert> alerts;
};

/// Checkpointed monitoring of a deployed model. The incumbent starts as
/// `incumbent` and is replaced (by the best predicted model, possibly
/// itself) only at checkpoints where monitor_step alerts on it.
SentinelRun run_sentinel(const TimeSeries& series, std::span<const FittedForecaster> pool,
                         const MonitorSet& monitors, std::size_t h, std::size_t period,
                         const ThresholdPolicy& policy, const std::string& incumbent);

struct SentinelTask {
  TimeSeries series;
  std::vector<FittedForecaster> pool;
  std::string incumbent;
};

/// Independent runs per series; the returned alert log is merged in
/// (series_id, checkpoint) order.
std::vector<SentinelRun> run_sentinel(std::span<const SentinelTask> tasks, const MonitorSet& monitors,
                                      std::size_t h, std::size_t period, const ThresholdPolicy& policy,
                                      std::vector<Alert>* merged_log = nullptr);

inline const std::string& pool_id(const ForecasterSpec& s) { return s.id; }
inline const std::string& pool_id(const FittedForecaster& f) { return f.id(); }

/// Pools are kept sorted by model id. Removing a model only stops its
/// forecasts; monitors of the remaining models are untouched.
template <typename Member>
std::vector<Member> remove_from_pool(std::vector<Member> pool, std::string_view model_id) {
  auto it = std::find_if(pool.begin(), pool.end(), [&](const Member& m) { return pool_id(m) == model_id; });
  if (it == pool.end()) throw UsageError("model '" + std::string(model_id) + "' is not in the pool");
  if (pool.size() == 1) throw UsageError("cannot remove the last model from the pool");
  pool.erase(it);
  return pool;
}

template <typename Member>
std::vector<Member> add_to_pool(std::vector<Member> pool, Member member) {
  if (std::any_of(pool.begin(), pool.end(), [&](const Member& m) { return pool_id(m) == pool_id(member); }))
    throw UsageError("model '" + pool_id(member) + "' is already in the pool");
  auto pos = std::lower_bound(pool.begin(), pool.end(), member,
                              [](const Member& a, const Member& b) { return pool_id(a) < pool_id(b); });
  pool.insert(pos, std::move(member));
  return pool;
}

template <typename Member>
std::vector<Member> sorted_pool(std::vector<Member> pool) {
  std::sort(pool.begin(), pool.end(), [](const Member& a, const Member& b) { return pool_id(a) < pool_id(b); });
  return pool;
}

}  // namespace fmon
