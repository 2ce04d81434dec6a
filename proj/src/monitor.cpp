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

#include "fmon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmon/error.hpp"
#include "fmon/parallel.hpp"
#include "fmon/rng.hpp"

namespace fmon {

MonitoringInput featurize(std::span<const double> observed, const ForecastBundle& forecasts,
                          std::size_t length, std::string series_id) {
  if (observed.empty()) throw UsageError("featurize: observed part is empty");
  const std::size_t used = observed.size() + forecasts.values.size();
  if (used > length)
    throw UsageError("featurize: " + std::to_string(used) + " values do not fit in length " +
                     std::to_string(length) + "; truncate the observed part first");

  double mean = 0.0;
  for (double v : observed) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw DataError("featurize: observed values must be finite and positive");
    mean += v;
  }
  mean /= static_cast<double>(observed.size());

  MonitoringInput input;
  input.source_series_id = std::move(series_id);
  input.monitored_model_id = forecasts.model_id;
  input.features = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length));
  auto pos = static_cast<Eigen::Index>(length - used);
  for (double v : observed) input.features[pos++] = v / mean;
  for (double v : forecasts.values) {
    if (!std::isfinite(v)) throw DataError("featurize: non-finite forecast");
    input.features[pos++] = v / mean;
  }
  return input;
}

MonitoringInput featurize_recent(std::span<const double> observed, const ForecastBundle& forecasts,
                                 std::size_t length, std::string series_id) {
  const std::size_t h = forecasts.values.size();
  if (h >= length)
    throw UsageError("featurize: feature length " + std::to_string(length) +
                     " leaves no room for observations at horizon " + std::to_string(h));
  const std::size_t keep = std::min(observed.size(), length - h);
  return featurize(observed.subspan(observed.size() - keep), forecasts, length, std::move(series_id));
}

Eigen::MatrixXd ErrorDataset::design() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(feature_length));
  for (std::size_t i = 0; i < inputs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = inputs[i].features.transpose();
  return x;
}

namespace {

struct SeriesPairs {
  // per pool member: the pairs this series contributed
  std::vector<std::vector<MonitoringInput>> inputs;
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<ForecastBundle>> forecasts;
  std::vector<std::vector<std::vector<double>>> actuals;
  std::optional<std::string> failure;
};

SeriesPairs pairs_for_series(const TimeSeries& raw, std::span<const ForecasterSpec> pool, std::size_t h,
                             std::size_t length, const OriginRule& rule) {
  const std::size_t k = pool.size();
  SeriesPairs out;
  out.inputs.resize(k);
  out.targets.resize(k);
  out.forecasts.resize(k);
  out.actuals.resize(k);
  try {
    const std::vector<double> y = fill_missing_nearest_past(raw).dense();
    if (y.size() < kMinFitLength + h)
      throw DataError("series '" + raw.id + "' has " + std::to_string(y.size()) + " points; need " +
                      std::to_string(kMinFitLength + h));
    const std::size_t stride = rule.stride ? rule.stride : h;
    for (std::size_t j = 0; j < std::max<std::size_t>(rule.origins, 1); ++j) {
      if (y.size() < h + j * stride + kMinFitLength) break;
      const std::size_t origin = y.size() - h - j * stride;
      const std::span<const double> train(y.data(), origin);
      const std::vector<double> truth(y.begin() + static_cast<std::ptrdiff_t>(origin),
                                      y.begin() + static_cast<std::ptrdiff_t>(origin + h));
      const auto fitted = fit_pool(pool, train);
      for (std::size_t m = 0; m < k; ++m) {
        ForecastBundle f = forecast(fitted[m], h);
        out.targets[m].push_back(smape(truth, f.values));
        out.inputs[m].push_back(featurize_recent(train, f, length, raw.id));
        out.forecasts[m].push_back(std::move(f));
        out.actuals[m].push_back(truth);
      }
    }
  } catch (const std::exception& e) {
    for (std::size_t m = 0; m < k; ++m) {
      out.inputs[m].clear();
      out.targets[m].clear();
      out.forecasts[m].clear();
      out.actuals[m].clear();
    }
    out.failure = e.what();
  }
  return out;
}

}  // namespace

std::vector<ErrorDataset> build_error_datasets(std::span<const TimeSeries> series_set,
                                               std::span<const ForecasterSpec> pool, std::size_t h,
                                               std::size_t length, OriginRule rule) {
  if (series_set.empty()) throw UsageError("build_error_dataset: no series given");
  if (pool.empty()) throw UsageError("build_error_dataset: no monitored models given");
  if (h == 0) throw UsageError("build_error_dataset: horizon must be >= 1");
  if (length <= h) throw UsageError("build_error_dataset: feature length must exceed the horizon");
  for (const auto& spec : pool) spec.validate();

  std::vector<const TimeSeries*> ordered;
  for (const auto& s : series_set) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const TimeSeries* a, const TimeSeries* b) { return a->id < b->id; });

  std::vector<SeriesPairs> per_series(ordered.size());
  parallel_for(ordered.size(), [&](std::size_t i) {
    per_series[i] = pairs_for_series(*ordered[i], pool, h, length, rule);
  });

  std::vector<ErrorDataset> out(pool.size());
  for (std::size_t m = 0; m < pool.size(); ++m) {
    ErrorDataset& d = out[m];
    d.monitored_model_id = pool[m].id;
    d.horizon = h;
    d.feature_length = length;
    std::vector<double> targets;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      auto& p = per_series[i];
      if (p.failure) {
        d.failures.push_back({ordered[i]->id, *p.failure});
        continue;
      }
      std::move(p.inputs[m].begin(), p.inputs[m].end(), std::back_inserter(d.inputs));
      targets.insert(targets.end(), p.targets[m].begin(), p.targets[m].end());
      std::move(p.forecasts[m].begin(), p.forecasts[m].end(), std::back_inserter(d.forecasts));
      std::move(p.actuals[m].begin(), p.actuals[m].end(), std::back_inserter(d.actuals));
    }
    if (d.inputs.empty())
      throw DataError("build_error_dataset: every series failed for model '" + pool[m].id + "'" +
                      (d.failures.empty() ? "" : ": " + d.failures.front().message));
    d.targets = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  }
  return out;
}

ErrorDataset build_error_dataset(std::span<const TimeSeries> series_set, const ForecasterSpec& model,
                                 std::size_t h, std::size_t length, OriginRule rule) {
  return std::move(build_error_datasets(series_set, std::span(&model, 1), h, length, rule).front());
}

std::string_view to_string(MonitorKind kind) {
  return kind == MonitorKind::gp ? "gp" : "mcdropout";
}

MonitorKind monitor_kind_from_string(std::string_view name) {
  if (name == "gp") return MonitorKind::gp;
  if (name == "mcdropout") return MonitorKind::mcdropout;
  throw UsageError("unknown monitor kind '" + std::string(name) + "'");
}

bool MonitorModel::probabilistic() const {
  if (const auto* d = std::get_if<DropoutMonitor>(&model)) return d->net.dropout_rate > 0;
  return true;
}

namespace {

void check_trainable(const ErrorDataset& data) {
  if (data.size() < 2) throw UsageError("monitor training needs at least 2 pairs");
  if (static_cast<std::size_t>(data.targets.size()) != data.size())
    throw UsageError("error dataset has mismatched inputs and targets");
  for (Eigen::Index i = 0; i < data.targets.size(); ++i)
    if (!(data.targets[i] >= 0.0 && data.targets[i] <= 2.0))
      throw UsageError("error dataset target outside [0, 2]");
}

double clip_smape(double v) { return std::clamp(v, 0.0, 2.0); }

}  // namespace

MonitorModel train_gp(const ErrorDataset& data, const GpTrainOptions& options) {
  check_trainable(data);
  const Eigen::MatrixXd x = data.design();
  const auto trained = train_ard_gp(x, data.targets, options);

  Eigen::MatrixXd xs(static_cast<Eigen::Index>(trained.rows.size()), x.cols());
  Eigen::VectorXd ys(xs.rows());
  for (std::size_t i = 0; i < trained.rows.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.row(trained.rows[i]);
    ys[static_cast<Eigen::Index>(i)] = data.targets[trained.rows[i]];
  }

  MonitorModel m;
  m.monitored_model_id = data.monitored_model_id;
  m.horizon = data.horizon;
  m.feature_length = data.feature_length;
  m.model = GaussianProcess<double>::condition(std::move(xs), std::move(ys), trained.params);
  m.train_log = {trained.initial_objective, trained.final_objective, trained.iterations};
  return m;
}

PredictedError predict_gp(const MonitorModel& model, const MonitoringInput& input) {
  const auto* gp = std::get_if<GaussianProcess<double>>(&model.model);
  if (!gp) throw UsageError("predict_gp: monitor is not a GP");
  if (static_cast<std::size_t>(input.features.size()) != model.feature_length)
    throw UsageError("predict_gp: input length differs from the monitor's feature length");
  const auto p = gp->predict(input.features);
  return {clip_smape(p.mean), std::sqrt(p.variance)};
}

MonitorModel train_mcdropout(const ErrorDataset& data, const DropoutTrainOptions& options,
                             std::size_t mc_samples) {
  check_trainable(data);
  if (mc_samples < 1) throw UsageError("mc sample count must be >= 1");
  const auto trained = train_dropout_net(data.design(), data.targets, options);
  MonitorModel m;
  m.monitored_model_id = data.monitored_model_id;
  m.horizon = data.horizon;
  m.feature_length = data.feature_length;
  m.model = DropoutMonitor{trained.net, mc_samples};
  m.train_log = {trained.initial_loss, trained.final_loss, trained.epochs};
  return m;
}

PredictedError predict_mcdropout(const MonitorModel& model, const MonitoringInput& input,
                                 std::size_t mc_samples, std::uint64_t seed) {
  const auto* d = std::get_if<DropoutMonitor>(&model.model);
  if (!d) throw UsageError("predict_mcdropout: monitor is not an MC-dropout net");
  if (static_cast<std::size_t>(input.features.size()) != model.feature_length)
    throw UsageError("predict_mcdropout: input length differs from the monitor's feature length");
  const auto s = mc_predict(d->net, input.features, mc_samples, seed);
  return {clip_smape(s.mean), s.std};
}

PredictedError predict(const MonitorModel& model, const MonitoringInput& input, std::uint64_t seed) {
  if (const auto* d = std::get_if<DropoutMonitor>(&model.model))
    return predict_mcdropout(model, input, d->mc_samples, seed);
  return predict_gp(model, input);
}

PredictedError holdout_baseline(const TimeSeries& train_portion, const ForecasterSpec& model, std::size_t h) {
  if (h == 0) throw UsageError("holdout_baseline: horizon must be >= 1");
  const std::vector<double> y = fill_missing_nearest_past(train_portion).dense();
  const std::size_t min_fit = minimum_train_length(model);
  if (y.size() < h + min_fit)
    throw DataError("holdout_baseline: series '" + train_portion.id + "' has " + std::to_string(y.size()) +
                    " points; need " + std::to_string(h + min_fit));
  const std::size_t cut = y.size() - h;
  const auto fitted = fit(model, std::span(y.data(), cut));
  const auto f = forecast(fitted, h);
  return {smape(std::span(y.data() + cut, h), f.values).value, std::nullopt};
}

MetricValue evaluate_monitor(std::span<const PredictedError> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size())
    throw UsageError("evaluate_monitor: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(truths.size()) + " truths");
  std::vector<double> means;
  means.reserve(predictions.size());
  for (const auto& p : predictions) means.push_back(p.mean);
  return rmse(means, truths);
}

PredictedError MonitorPredictor::predict(const PredictionQuery& query) const {
  ForecastBundle bundle{std::string(query.model_id), query.observed.size(),
                        {query.forecasts.begin(), query.forecasts.end()}};
  const MonitoringInput input =
      featurize_recent(query.observed, bundle, model_->feature_length, std::string(query.series_id));
  std::uint64_t seed = fnv1a(query.series_id, seed_ ^ 0x51ed270b27ULL);
  seed = fnv1a(query.model_id, seed);
  seed = mix_seed(seed ^ query.observed.size());
  return fmon::predict(*model_, input, seed);
}

PredictedError OracleMonitor::predict(const PredictionQuery& query) const {
  auto it = actuals_.find(query.series_id);
  if (it == actuals_.end())
    throw UsageError("oracle monitor has no actuals for series '" + std::string(query.series_id) + "'");
  const std::size_t origin = query.observed.size();
  const std::size_t len = query.evaluation_length ? query.evaluation_length : query.forecasts.size();
  if (origin + len > it->second.size() || len > query.forecasts.size())
    throw UsageError("oracle monitor: evaluation window runs past the known actuals");
  return {smape(std::span(it->second.data() + origin, len), query.forecasts.first(len)).value, 0.0};
}

}  // namespace fmon
