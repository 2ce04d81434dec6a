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
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmon/forest.hpp"
#include "fmon/series.hpp"

namespace fmon {

enum class ForecasterKind { ses, holt, damp, theta, comb, rw, rf };

std::string_view to_string(ForecasterKind kind);
ForecasterKind forecaster_kind_from_string(std::string_view name);

/// A pool member: which method and its hyperparameters. Recognized keys:
///   m            seasonal period (default 1, no adjustment)
///   lags         rf lag count (default 14)
///   trees        rf tree count (default 100)
///   min_leaf     rf minimum leaf size (default 5)
///   max_features rf features tried per split, 0 = all (default 0)
///   seed         rf bootstrap seed (default 0)
struct ForecasterSpec {
  std::string id;  // model id; defaults to the kind name
  ForecasterKind kind = ForecasterKind::ses;
  std::map<std::string, double> hyperparameters;

  static ForecasterSpec of(ForecasterKind kind, std::string id = {});

  double hyper(const std::string& key, double fallback) const;
  std::size_t period() const;
  void validate() const;

  friend bool operator==(const ForecasterSpec&, const ForecasterSpec&) = default;
};

// Search boxes for the smoothing parameters.
inline constexpr double kSmoothingMin = 0.01;
inline constexpr double kSmoothingMax = 0.99;
inline constexpr double kDampingMin = 0.80;
inline constexpr double kDampingMax = 0.99;
inline constexpr double kCoarseStep = 0.05;
inline constexpr double kFineStep = 0.005;

/// Level/trend state shared by ses (beta = 0, trend = 0), holt (phi = 1)
/// and damped trend.
struct SmoothingState {
  double alpha = 0.0;
  double beta = 0.0;
  double phi = 1.0;
  double level = 0.0;
  double trend = 0.0;

  void observe(double y);
  double forecast(std::size_t k) const;  // k >= 1 steps ahead

  friend bool operator==(const SmoothingState&, const SmoothingState&) = default;
};

enum class SmoothingKind { ses, holt, damp };

/// Initializes from y[0], y[1] and runs the recursion over y[1..].
SmoothingState run_smoothing(SmoothingKind kind, double alpha, double beta, double phi,
                             std::span<const double> y);

/// In-sample one-step-ahead sum of squared errors from the same
/// initialization; stops early once the running sum reaches `bound`.
double smoothing_sse(SmoothingKind kind, double alpha, double beta, double phi,
                     std::span<const double> y, double bound = std::numeric_limits<double>::infinity());

/// Two-stage grid search: 0.05 grid over the parameter box, then a 0.005
/// grid over the best coarse cell.
SmoothingState fit_smoothing(SmoothingKind kind, std::span<const double> y);

struct ThetaState {
  double intercept = 0.0;  // theta=0 line: intercept + slope * t, t = 1-based step
  double slope = 0.0;
  SmoothingState line2;    // ses on the theta=2 line

  friend bool operator==(const ThetaState&, const ThetaState&) = default;
};

struct SeasonalAdjustment {
  std::vector<double> deseasonalized;
  std::vector<double> indices;  // length m, mean 1; all ones when not applied
  bool applied = false;
};

/// Multiplicative classical decomposition gated by a 90% lag-m
/// autocorrelation test. Needs at least 3m points to test at all.
SeasonalAdjustment seasonal_adjust(std::span<const double> train, std::size_t m);

/// A fitted pool member. Immutable; update_state returns a new value.
struct FittedForecaster {
  ForecasterSpec spec;
  std::size_t train_len = 0;     // points seen at fit time
  std::size_t observed_len = 0;  // points seen including later updates
  bool seasonal_adjusted = false;
  std::vector<double> seasonal_indices;  // length m

  std::vector<SmoothingState> smoothing;  // 1 entry (ses/holt/damp), 3 for comb
  std::optional<ThetaState> theta;
  std::optional<RegressionForest> forest;
  std::vector<double> history;  // seasonally adjusted observations

  const std::string& id() const { return spec.id; }

  friend bool operator==(const FittedForecaster&, const FittedForecaster&) = default;
};

FittedForecaster fit(const ForecasterSpec& spec, std::span<const double> train);

/// Fits several specs on one series, sharing smoothing fits between comb
/// and its components. Results equal calling fit() per spec.
std::vector<FittedForecaster> fit_pool(std::span<const ForecasterSpec> specs,
                                       std::span<const double> train);

ForecastBundle forecast(const FittedForecaster& model, std::size_t h);

/// Advances the model over newly realized observations with all fitted
/// parameters frozen.
FittedForecaster update_state(const FittedForecaster& model,
                              std::span<const double> new_observations);

// Structural minimum number of training points for a method.
std::size_t minimum_train_length(const ForecasterSpec& spec);

}  // namespace fmon
