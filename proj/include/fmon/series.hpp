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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fmon {

// Series shorter than this (after preprocessing) cannot be fitted.
inline constexpr std::size_t kMinFitLength = 8;

/// One univariate price series. Position in `values` is the time step;
/// std::nullopt marks a missing observation.
struct TimeSeries {
  std::string id;
  std::vector<std::optional<double>> values;

  std::size_t size() const { return values.size(); }
  bool has_missing() const;

  // Present values in order; throws DataError if any are missing.
  std::vector<double> dense() const;

  static TimeSeries from_values(std::string id, std::span<const double> values);

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

/// h-step forecasts issued by one monitored model from a given origin.
struct ForecastBundle {
  std::string model_id;
  std::size_t origin = 0;  // number of observations consumed before forecasting
  std::vector<double> values;

  std::size_t horizon() const { return values.size(); }
};

enum class MetricKind { smape, rmse };

struct MetricValue {
  MetricKind kind;
  double value;

  operator double() const { return value; }
};

/// Symmetric MAPE bounded in [0, 2]:
///   (1/h) * sum 2|y - f| / (|y| + |f|)
/// Throws UsageError on length mismatch or empty input and DataError when a
/// pair is zero on both sides (the ratio is undefined there).
MetricValue smape(std::span<const double> actual, std::span<const double> forecast);

MetricValue rmse(std::span<const double> a, std::span<const double> b);

/// Replaces each missing value by the most recent present one. Leading
/// missing values have no past and are dropped, so the result starts at
/// step 0 with a present value.
TimeSeries fill_missing_nearest_past(const TimeSeries& series);

struct TrainHoldout {
  TimeSeries train;
  std::vector<double> holdout;
};

/// Splits off the last h observations. The remaining training part must
/// hold at least `min_train` points; pipelines pass kMinFitLength.
TrainHoldout split_train_holdout(const TimeSeries& series, std::size_t h,
                                 std::size_t min_train = 2);

}  // namespace fmon
