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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fmon/dropout_net.hpp"
#include "fmon/forecasters.hpp"
#include "fmon/gaussian_process.hpp"
#include "fmon/series.hpp"

namespace fmon {

/// Fixed-length encoding of (observed series, issued forecasts).
struct MonitoringInput {
  Eigen::VectorXd features;
  std::string source_series_id;
  std::string monitored_model_id;
};

/// Concatenates observed then forecast values, divides everything by the
/// mean of the observed part and left-pads with zeros to `length`. The
/// forecast block therefore always occupies the trailing coordinates.
MonitoringInput featurize(std::span<const double> observed, const ForecastBundle& forecasts,
                          std::size_t length, std::string series_id = {});

/// featurize() after keeping only the most recent length - h observations.
MonitoringInput featurize_recent(std::span<const double> observed, const ForecastBundle& forecasts,
                                 std::size_t length, std::string series_id = {});

/// Forecast origins per series: T = len - h - j * stride for j < origins.
struct OriginRule {
  std::size_t origins = 1;
  std::size_t stride = 0;  // 0 = h
};

struct SeriesFailure {
  std::string series_id;
  std::string message;
};

/// Supervised pairs (featurized series + forecasts, realized sMAPE) for one
/// monitored model at one horizon.
struct ErrorDataset {
  std::string monitored_model_id;
  std::size_t horizon = 0;
  std::size_t feature_length = 0;
  std::vector<MonitoringInput> inputs;
  Eigen::VectorXd targets;
  // The pieces each target was computed from.
  std::vector<ForecastBundle> forecasts;
  std::vector<std::vector<double>> actuals;
  std::vector<SeriesFailure> failures;

  std::size_t size() const { return inputs.size(); }
  Eigen::MatrixXd design() const;  // N x L, one input per row
};

ErrorDataset build_error_dataset(std::span<const TimeSeries> series_set, const ForecasterSpec& model,
                                 std::size_t h, std::size_t length, OriginRule rule = {});

/// One dataset per spec; each series is fitted once for the whole pool.
std::vector<ErrorDataset> build_error_datasets(std::span<const TimeSeries> series_set,
                                               std::span<const ForecasterSpec> pool, std::size_t h,
                                               std::size_t length, OriginRule rule = {});

/// Predicted sMAPE of a monitored model. `mean` is clipped to [0, 2].
struct PredictedError {
  double mean = 0.0;
  std::optional<double> std;

  friend bool operator==(const PredictedError&, const PredictedError&) = default;
};

enum class MonitorKind { gp, mcdropout };

std::string_view to_string(MonitorKind kind);
MonitorKind monitor_kind_from_string(std::string_view name);

struct TrainLog {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::size_t iterations = 0;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct DropoutMonitor {
  DropoutNet<double> net;
  std::size_t mc_samples = 100;

  friend bool operator==(const DropoutMonitor&, const DropoutMonitor&) = default;
};

/// A trained monitoring model f for one (monitored model, horizon) pair.
struct MonitorModel {
  std::string monitored_model_id;
  std::size_t horizon = 0;
  std::size_t feature_length = 0;
  std::variant<GaussianProcess<double>, DropoutMonitor> model;
  TrainLog train_log;

  MonitorKind kind() const {
    return std::holds_alternative<GaussianProcess<double>>(model) ? MonitorKind::gp : MonitorKind::mcdropout;
  }
  // True when predictions carry a standard deviation.
  bool probabilistic() const;

  friend bool operator==(const MonitorModel&, const MonitorModel&) = default;
};

MonitorModel train_gp(const ErrorDataset& data, const GpTrainOptions& options = {});
PredictedError predict_gp(const MonitorModel& model, const MonitoringInput& input);

MonitorModel train_mcdropout(const ErrorDataset& data, const DropoutTrainOptions& options = {},
                             std::size_t mc_samples = 100);
PredictedError predict_mcdropout(const MonitorModel& model, const MonitoringInput& input,
                                 std::size_t mc_samples, std::uint64_t seed);

// Dispatches on the monitor kind using its stored sample count.
PredictedError predict(const MonitorModel& model, const MonitoringInput& input, std::uint64_t seed = 0);

/// Cross-validation stand-in: refit on all but the last h training points
/// and score the forecast against those h points.
PredictedError holdout_baseline(const TimeSeries& train_portion, const ForecasterSpec& model, std::size_t h);

MetricValue evaluate_monitor(std::span<const PredictedError> predictions, std::span<const double> truths);

/// What a monitor is asked at prediction time.
struct PredictionQuery {
  std::string_view series_id;
  std::string_view model_id;
  std::span<const double> observed;   // every observation before the forecast origin
  std::span<const double> forecasts;  // forecasts issued at the origin
  std::size_t evaluation_length = 0;  // leading forecasts that will actually be used
};

/// Anything that can estimate a monitored model's future sMAPE.
class ErrorPredictor {
 public:
  virtual ~ErrorPredictor() = default;
  virtual PredictedError predict(const PredictionQuery& query) const = 0;
  virtual bool probabilistic() const = 0;
};

/// Adapts a trained MonitorModel. MC-dropout sampling is seeded from
/// (seed, series id, model id, origin) so answers are reproducible.
class MonitorPredictor final : public ErrorPredictor {
 public:
  explicit MonitorPredictor(const MonitorModel& model, std::uint64_t seed = 0)
      : model_(&model), seed_(seed) {}

  PredictedError predict(const PredictionQuery& query) const override;
  bool probabilistic() const override { return model_->probabilistic(); }
  const MonitorModel& model() const { return *model_; }

 private:
  const MonitorModel* model_;
  std::uint64_t seed_;
};

/// Test-only monitor that knows the future: returns the realized sMAPE of
/// the evaluated forecasts with zero uncertainty.
class OracleMonitor final : public ErrorPredictor {
 public:
  explicit OracleMonitor(std::map<std::string, std::vector<double>, std::less<>> actuals)
      : actuals_(std::move(actuals)) {}

  PredictedError predict(const PredictionQuery& query) const override;
  bool probabilistic() const override { return true; }

 private:
  std::map<std::string, std::vector<double>, std::less<>> actuals_;
};

}  // namespace fmon
