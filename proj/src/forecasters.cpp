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

#include "fmon/forecasters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "fmon/error.hpp"

namespace fmon {

std::string_view to_string(ForecasterKind kind) {
  switch (kind) {
    case ForecasterKind::ses: return "ses";
    case ForecasterKind::holt: return "holt";
    case ForecasterKind::damp: return "damp";
    case ForecasterKind::theta: return "theta";
    case ForecasterKind::comb: return "comb";
    case ForecasterKind::rw: return "rw";
    case ForecasterKind::rf: return "rf";
  }
  return "?";
}

ForecasterKind forecaster_kind_from_string(std::string_view name) {
  for (auto kind : {ForecasterKind::ses, ForecasterKind::holt, ForecasterKind::damp,
                    ForecasterKind::theta, ForecasterKind::comb, ForecasterKind::rw,
                    ForecasterKind::rf}) {
    if (to_string(kind) == name) return kind;
  }
  throw UsageError("unknown forecaster kind '" + std::string(name) + "'");
}

ForecasterSpec ForecasterSpec::of(ForecasterKind kind, std::string id) {
  ForecasterSpec spec;
  spec.kind = kind;
  spec.id = id.empty() ? std::string(to_string(kind)) : std::move(id);
  return spec;
}

double ForecasterSpec::hyper(const std::string& key, double fallback) const {
  auto it = hyperparameters.find(key);
  return it == hyperparameters.end() ? fallback : it->second;
}

std::size_t ForecasterSpec::period() const {
  return static_cast<std::size_t>(hyper("m", 1.0));
}

void ForecasterSpec::validate() const {
  if (id.empty()) throw UsageError("forecaster spec has an empty id");
  auto integral_at_least = [&](const char* key, double fallback, double min) {
    const double v = hyper(key, fallback);
    if (!(v >= min) || v != std::floor(v))
      throw UsageError("forecaster '" + id + "': hyperparameter '" + key + "' must be an integer >= " +
                       std::to_string(static_cast<int>(min)));
  };
  integral_at_least("m", 1, 1);
  if (kind == ForecasterKind::rf) {
    integral_at_least("lags", 14, 1);
    integral_at_least("trees", 100, 1);
    integral_at_least("min_leaf", 5, 1);
    integral_at_least("max_features", 0, 0);
    integral_at_least("seed", 0, 0);
  }
}

std::size_t minimum_train_length(const ForecasterSpec& spec) {
  switch (spec.kind) {
    case ForecasterKind::ses:
    case ForecasterKind::rw: return 1;
    case ForecasterKind::rf: return static_cast<std::size_t>(spec.hyper("lags", 14)) + 1;
    default: return 2;
  }
}

// --- exponential smoothing -------------------------------------------------

void SmoothingState::observe(double y) {
  const double prev_level = level;
  level = alpha * y + (1.0 - alpha) * (prev_level + phi * trend);
  trend = beta * (level - prev_level) + (1.0 - beta) * phi * trend;
}

double SmoothingState::forecast(std::size_t k) const {
  if (phi == 1.0) return level + static_cast<double>(k) * trend;
  double damp_sum = 0.0, power = 1.0;
  for (std::size_t j = 1; j <= k; ++j) {
    power *= phi;
    damp_sum += power;
  }
  return level + damp_sum * trend;
}

namespace {

SmoothingState initial_state(SmoothingKind kind, double alpha, double beta, double phi,
                             std::span<const double> y) {
  SmoothingState s;
  s.alpha = alpha;
  s.level = y[0];
  if (kind != SmoothingKind::ses) {
    s.beta = beta;
    s.phi = kind == SmoothingKind::damp ? phi : 1.0;
    s.trend = y.size() > 1 ? y[1] - y[0] : 0.0;
  }
  return s;
}

std::vector<double> coarse_grid(double lo, double hi) {
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double v = lo + k * kCoarseStep;
    if (v > hi + 1e-12) break;
    grid.push_back(v);
  }
  if (grid.back() < hi - 1e-12) grid.push_back(hi);
  return grid;
}

std::vector<double> fine_grid(double center, double lo, double hi) {
  std::vector<double> grid;
  for (int j = -10; j <= 10; ++j) {
    const double v = center + j * kFineStep;
    if (v < lo - 1e-12 || v > hi + 1e-12) continue;
    grid.push_back(std::clamp(v, lo, hi));
  }
  return grid;
}

// Minimizes over the cartesian product of the per-dimension candidate
// lists. Strict improvement only, so earlier candidates win ties.
template <std::size_t D, typename Objective>
void scan_product(const std::array<std::vector<double>, D>& axes, Objective&& objective,
                  std::array<double, D>& best, double& best_value) {
  std::array<std::size_t, D> idx{};
  while (true) {
    std::array<double, D> point;
    for (std::size_t d = 0; d < D; ++d) point[d] = axes[d][idx[d]];
    const double value = objective(point, best_value);
    if (value < best_value) {
      best_value = value;
      best = point;
    }
    std::size_t d = D;
    while (d > 0) {
      --d;
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
      if (d == 0) return;
    }
  }
}

template <std::size_t D, typename Objective>
std::array<double, D> grid_minimize(const std::array<std::pair<double, double>, D>& boxes,
                                    Objective&& objective) {
  std::array<std::vector<double>, D> axes;
  for (std::size_t d = 0; d < D; ++d) axes[d] = coarse_grid(boxes[d].first, boxes[d].second);

  std::array<double, D> best{};
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < D; ++d) best[d] = axes[d].front();
  scan_product(axes, objective, best, best_value);

  for (std::size_t d = 0; d < D; ++d)
    axes[d] = fine_grid(best[d], boxes[d].first, boxes[d].second);
  scan_product(axes, objective, best, best_value);
  return best;
}

}  // namespace

double smoothing_sse(SmoothingKind kind, double alpha, double beta, double phi,
                     std::span<const double> y, double bound) {
  SmoothingState s = initial_state(kind, alpha, beta, phi, y);
  double sse = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double e = y[t] - (s.level + s.phi * s.trend);
    sse += e * e;
    if (sse >= bound) return sse;
    s.observe(y[t]);
  }
  return sse;
}

SmoothingState run_smoothing(SmoothingKind kind, double alpha, double beta, double phi,
                             std::span<const double> y) {
  if (y.empty()) throw UsageError("run_smoothing: empty series");
  SmoothingState s = initial_state(kind, alpha, beta, phi, y);
  for (std::size_t t = 1; t < y.size(); ++t) s.observe(y[t]);
  return s;
}

SmoothingState fit_smoothing(SmoothingKind kind, std::span<const double> y) {
  if (y.empty()) throw DataError("cannot fit exponential smoothing to an empty series");
  const std::pair<double, double> smooth{kSmoothingMin, kSmoothingMax};
  switch (kind) {
    case SmoothingKind::ses: {
      auto best = grid_minimize<1>({smooth}, [&](const std::array<double, 1>& p, double bound) {
        return smoothing_sse(kind, p[0], 0.0, 1.0, y, bound);
      });
      return run_smoothing(kind, best[0], 0.0, 1.0, y);
    }
    case SmoothingKind::holt: {
      auto best = grid_minimize<2>({smooth, smooth},
                                   [&](const std::array<double, 2>& p, double bound) {
                                     return smoothing_sse(kind, p[0], p[1], 1.0, y, bound);
                                   });
      return run_smoothing(kind, best[0], best[1], 1.0, y);
    }
    case SmoothingKind::damp: {
      auto best = grid_minimize<3>({smooth, smooth, std::pair{kDampingMin, kDampingMax}},
                                   [&](const std::array<double, 3>& p, double bound) {
                                     return smoothing_sse(kind, p[0], p[1], p[2], y, bound);
                                   });
      return run_smoothing(kind, best[0], best[1], best[2], y);
    }
  }
  throw UsageError("fit_smoothing: unknown kind");
}

// --- seasonal adjustment ---------------------------------------------------

namespace {

double autocorrelation(std::span<const double> y, std::size_t lag, double mean, double denom) {
  double num = 0.0;
  for (std::size_t t = lag; t < y.size(); ++t) num += (y[t] - mean) * (y[t - lag] - mean);
  return num / denom;
}

bool seasonality_significant(std::span<const double> y, std::size_t m) {
  const auto n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double denom = 0.0;
  for (double v : y) denom += (v - mean) * (v - mean);
  if (denom <= 0.0) return false;

  double sum_sq = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    const double r = autocorrelation(y, k, mean, denom);
    sum_sq += r * r;
  }
  const double r_m = autocorrelation(y, m, mean, denom);
  const double limit = 1.645 * std::sqrt((1.0 + 2.0 * sum_sq) / n);
  return std::abs(r_m) > limit;
}

}  // namespace

SeasonalAdjustment seasonal_adjust(std::span<const double> train, std::size_t m) {
  if (m == 0) throw UsageError("seasonal_adjust: period must be >= 1");
  SeasonalAdjustment out;
  out.deseasonalized.assign(train.begin(), train.end());
  out.indices.assign(m, 1.0);
  if (m == 1 || train.size() < 3 * m || !seasonality_significant(train, m)) return out;

  for (double v : train)
    if (!(v > 0.0))
      throw DataError("seasonal_adjust: multiplicative decomposition needs positive values");

  // Centered moving average: plain for odd m, 2 x m for even m.
  const std::size_t n = train.size();
  const std::size_t half = m / 2;
  std::vector<double> ratio_sum(m, 0.0);
  std::vector<std::size_t> ratio_count(m, 0);
  for (std::size_t t = half; t + half < n; ++t) {
    double cma = 0.0;
    if (m % 2 == 1) {
      for (std::size_t j = t - half; j <= t + half; ++j) cma += train[j];
    } else {
      cma = 0.5 * train[t - half] + 0.5 * train[t + half];
      for (std::size_t j = t - half + 1; j < t + half; ++j) cma += train[j];
    }
    cma /= static_cast<double>(m);
    ratio_sum[t % m] += train[t] / cma;
    ++ratio_count[t % m];
  }

  double mean_index = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    out.indices[k] = ratio_sum[k] / static_cast<double>(ratio_count[k]);
    mean_index += out.indices[k];
  }
  mean_index /= static_cast<double>(m);
  for (auto& v : out.indices) v /= mean_index;
  for (std::size_t t = 0; t < n; ++t) out.deseasonalized[t] = train[t] / out.indices[t % m];
  out.applied = true;
  return out;
}

// --- fitting ---------------------------------------------------------------

namespace {

struct FitCache {
  std::map<std::size_t, SeasonalAdjustment> seasonal;
  std::map<std::pair<std::size_t, int>, SmoothingState> smoothing;

  const SeasonalAdjustment& adjust(std::span<const double> train, std::size_t m) {
    auto it = seasonal.find(m);
    if (it == seasonal.end()) it = seasonal.emplace(m, seasonal_adjust(train, m)).first;
    return it->second;
  }

  const SmoothingState& smooth(SmoothingKind kind, std::size_t m, std::span<const double> y) {
    const std::pair<std::size_t, int> key{m, static_cast<int>(kind)};
    auto it = smoothing.find(key);
    if (it == smoothing.end()) it = smoothing.emplace(key, fit_smoothing(kind, y)).first;
    return it->second;
  }
};

ThetaState fit_theta(std::span<const double> y) {
  const auto n = static_cast<double>(y.size());
  const double t_mean = (n + 1.0) / 2.0;
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dt = static_cast<double>(i + 1) - t_mean;
    sxy += dt * (y[i] - y_mean);
    sxx += dt * dt;
  }
  ThetaState theta;
  theta.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  theta.intercept = y_mean - theta.slope * t_mean;

  std::vector<double> line2(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    line2[i] = 2.0 * y[i] - (theta.intercept + theta.slope * static_cast<double>(i + 1));
  theta.line2 = fit_smoothing(SmoothingKind::ses, line2);
  return theta;
}

RegressionForest fit_forest(const ForecasterSpec& spec, std::span<const double> y) {
  const auto lags = static_cast<std::size_t>(spec.hyper("lags", 14));
  if (y.size() <= lags)
    throw DataError("rf '" + spec.id + "': training length " + std::to_string(y.size()) +
                    " must exceed the lag count " + std::to_string(lags));
  const std::size_t rows = y.size() - lags;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lags));
  Eigen::VectorXd target(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < lags; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y[i + j];
    target[static_cast<Eigen::Index>(i)] = y[i + lags];
  }
  ForestOptions options;
  options.trees = static_cast<std::size_t>(spec.hyper("trees", 100));
  options.min_leaf = static_cast<std::size_t>(spec.hyper("min_leaf", 5));
  options.max_features = static_cast<std::size_t>(spec.hyper("max_features", 0));
  options.seed = static_cast<std::uint64_t>(spec.hyper("seed", 0));
  return RegressionForest::fit(x, target, options);
}

FittedForecaster fit_cached(const ForecasterSpec& spec, std::span<const double> train,
                            FitCache& cache) {
  spec.validate();
  if (train.size() < minimum_train_length(spec))
    throw DataError("forecaster '" + spec.id + "' needs at least " +
                    std::to_string(minimum_train_length(spec)) + " training points, got " +
                    std::to_string(train.size()));
  for (double v : train)
    if (!std::isfinite(v)) throw DataError("forecaster '" + spec.id + "': non-finite training value");

  const std::size_t m = spec.period();
  const SeasonalAdjustment& adj = cache.adjust(train, m);
  const std::span<const double> y = adj.deseasonalized;

  FittedForecaster model;
  model.spec = spec;
  model.train_len = train.size();
  model.observed_len = train.size();
  model.seasonal_adjusted = adj.applied;
  model.seasonal_indices = adj.indices;
  model.history.assign(y.begin(), y.end());

  switch (spec.kind) {
    case ForecasterKind::ses:
      model.smoothing = {cache.smooth(SmoothingKind::ses, m, y)};
      break;
    case ForecasterKind::holt:
      model.smoothing = {cache.smooth(SmoothingKind::holt, m, y)};
      break;
    case ForecasterKind::damp:
      model.smoothing = {cache.smooth(SmoothingKind::damp, m, y)};
      break;
    case ForecasterKind::comb:
      model.smoothing = {cache.smooth(SmoothingKind::ses, m, y),
                         cache.smooth(SmoothingKind::holt, m, y),
                         cache.smooth(SmoothingKind::damp, m, y)};
      break;
    case ForecasterKind::theta:
      model.theta = fit_theta(y);
      break;
    case ForecasterKind::rw:
      break;
    case ForecasterKind::rf:
      model.forest = fit_forest(spec, y);
      break;
  }
  return model;
}

}  // namespace

FittedForecaster fit(const ForecasterSpec& spec, std::span<const double> train) {
  FitCache cache;
  return fit_cached(spec, train, cache);
}

std::vector<FittedForecaster> fit_pool(std::span<const ForecasterSpec> specs,
                                       std::span<const double> train) {
  FitCache cache;
  std::vector<FittedForecaster> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) out.push_back(fit_cached(spec, train, cache));
  return out;
}

// --- forecasting and state update -----------------------------------------

ForecastBundle forecast(const FittedForecaster& model, std::size_t h) {
  if (h < 1) throw UsageError("forecast: horizon must be >= 1");
  if (model.history.empty()) throw UsageError("forecast: model is not fitted");

  ForecastBundle bundle;
  bundle.model_id = model.id();
  bundle.origin = model.observed_len;
  bundle.values.resize(h);

  const auto& s = model.smoothing;
  switch (model.spec.kind) {
    case ForecasterKind::ses:
    case ForecasterKind::holt:
    case ForecasterKind::damp:
      for (std::size_t k = 1; k <= h; ++k) bundle.values[k - 1] = s[0].forecast(k);
      break;
    case ForecasterKind::comb:
      for (std::size_t k = 1; k <= h; ++k)
        bundle.values[k - 1] = (s[0].forecast(k) + s[1].forecast(k) + s[2].forecast(k)) / 3.0;
      break;
    case ForecasterKind::theta: {
      const ThetaState& th = *model.theta;
      const double ses_part = th.line2.forecast(1);
      for (std::size_t k = 1; k <= h; ++k) {
        const double t = static_cast<double>(model.observed_len + k);
        bundle.values[k - 1] = 0.5 * (th.intercept + th.slope * t) + 0.5 * ses_part;
      }
      break;
    }
    case ForecasterKind::rw:
      std::fill(bundle.values.begin(), bundle.values.end(), model.history.back());
      break;
    case ForecasterKind::rf: {
      const auto lags = static_cast<std::size_t>(model.spec.hyper("lags", 14));
      std::vector<double> window(model.history.end() - static_cast<std::ptrdiff_t>(lags),
                                 model.history.end());
      for (std::size_t k = 0; k < h; ++k) {
        const double next = model.forest->predict(window);
        bundle.values[k] = next;
        window.erase(window.begin());
        window.push_back(next);
      }
      break;
    }
  }

  if (model.seasonal_adjusted) {
    const std::size_t m = model.seasonal_indices.size();
    for (std::size_t k = 0; k < h; ++k)
      bundle.values[k] *= model.seasonal_indices[(model.observed_len + k) % m];
  }
  return bundle;
}

FittedForecaster update_state(const FittedForecaster& model,
                              std::span<const double> new_observations) {
  FittedForecaster next = model;
  const std::size_t m = next.seasonal_indices.size();
  for (double raw : new_observations) {
    if (!std::isfinite(raw)) throw DataError("update_state: non-finite observation");
    const double y = next.seasonal_adjusted ? raw / next.seasonal_indices[next.observed_len % m] : raw;
    for (auto& s : next.smoothing) s.observe(y);
    if (next.theta) {
      const double t = static_cast<double>(next.observed_len + 1);
      next.theta->line2.observe(2.0 * y - (next.theta->intercept + next.theta->slope * t));
    }
    next.history.push_back(y);
    ++next.observed_len;
  }
  return next;
}

}  // namespace fmon
