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

#include "fmon/series.hpp"

#include <cmath>
#include <string>

#include "fmon/error.hpp"

namespace fmon {

bool TimeSeries::has_missing() const {
  for (const auto& v : values)
    if (!v) return true;
  return false;
}

std::vector<double> TimeSeries::dense() const {
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (!values[t])
      throw DataError("series '" + id + "' has a missing value at step " + std::to_string(t));
    out.push_back(*values[t]);
  }
  return out;
}

TimeSeries TimeSeries::from_values(std::string id, std::span<const double> values) {
  TimeSeries s{std::move(id), {}};
  s.values.assign(values.begin(), values.end());
  return s;
}

MetricValue smape(std::span<const double> actual, std::span<const double> forecast) {
  if (actual.size() != forecast.size())
    throw UsageError("smape: length mismatch (" + std::to_string(actual.size()) + " vs " +
                     std::to_string(forecast.size()) + ")");
  if (actual.empty()) throw UsageError("smape: empty input");

  double sum = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    const double denom = std::abs(actual[t]) + std::abs(forecast[t]);
    if (denom == 0.0)
      throw DataError("smape: actual and forecast are both zero at index " + std::to_string(t));
    sum += 2.0 * std::abs(actual[t] - forecast[t]) / denom;
  }
  return {MetricKind::smape, sum / static_cast<double>(actual.size())};
}

MetricValue rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw UsageError("rmse: length mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  if (a.empty()) throw UsageError("rmse: empty input");

  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return {MetricKind::rmse, std::sqrt(sum / static_cast<double>(a.size()))};
}

TimeSeries fill_missing_nearest_past(const TimeSeries& series) {
  TimeSeries out{series.id, {}};
  out.values.reserve(series.size());
  std::optional<double> last;
  for (const auto& v : series.values) {
    if (v) last = v;
    if (last) out.values.push_back(last);
  }
  if (out.values.empty()) throw DataError("series '" + series.id + "' has no present values");
  return out;
}

TrainHoldout split_train_holdout(const TimeSeries& series, std::size_t h,
                                 std::size_t min_train) {
  if (h == 0) throw UsageError("split_train_holdout: horizon must be positive");
  if (series.size() < h + min_train)
    throw DataError("series '" + series.id + "' has " + std::to_string(series.size()) +
                    " points; need at least " + std::to_string(h + min_train) +
                    " for horizon " + std::to_string(h));

  const auto cut = static_cast<std::ptrdiff_t>(series.size() - h);
  TrainHoldout out;
  out.train.id = series.id;
  out.train.values.assign(series.values.begin(), series.values.begin() + cut);
  for (auto it = series.values.begin() + cut; it != series.values.end(); ++it) {
    if (!*it) throw DataError("series '" + series.id + "' has a missing value in the holdout");
    out.holdout.push_back(**it);
  }
  return out;
}

}  // namespace fmon
