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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "fmon/error.hpp"
#include "fmon/monitor.hpp"
#include "fmon/rng.hpp"

using namespace fmon;

namespace {

ForecastBundle bundle(std::vector<double> values, std::string id = "g") {
  return ForecastBundle{std::move(id), 0, std::move(values)};
}

ErrorDataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t dims) {
  Rng rng(seed);
  ErrorDataset d;
  d.monitored_model_id = "g";
  d.horizon = 1;
  d.feature_length = dims;
  d.targets.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    MonitoringInput in;
    in.features.resize(static_cast<Eigen::Index>(dims));
    for (auto& v : in.features) v = rng.uniform(0.5, 1.5);
    d.targets[static_cast<Eigen::Index>(i)] = 0.2 + 0.1 * std::sin(3 * in.features[0]) + 0.01 * rng.normal();
    d.inputs.push_back(std::move(in));
  }
  return d;
}

}  // namespace

TEST_CASE("featurize examples") {
  auto in = featurize(std::vector{2.0, 4.0}, bundle({6.0}), 5);
  REQUIRE(in.features.size() == 5);
  CHECK(in.features[0] == 0.0);
  CHECK(in.features[1] == 0.0);
  CHECK(in.features[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(in.features[3] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(in.features[4] == doctest::Approx(2.0).epsilon(1e-12));

  in = featurize(std::vector{3.0, 3.0}, bundle({3.0}), 3);
  CHECK(in.features == Eigen::Vector3d(1, 1, 1));

  // exact fit: no padding
  in = featurize(std::vector{1.0, 2.0, 3.0}, bundle({4.0, 5.0}), 5);
  CHECK(in.features[0] == doctest::Approx(0.5));
  CHECK(in.monitored_model_id == "g");

  CHECK_THROWS_AS(featurize(std::vector{1.0, 2.0, 3.0}, bundle({4.0, 5.0}), 4), UsageError);
}

TEST_CASE("featurize invariants") {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto length = static_cast<std::size_t>(rng.integer(4, 40));
    const auto h = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(length) - 1));
    const auto n_obs = static_cast<std::size_t>(rng.integer(1, 60));
    std::vector<double> observed(n_obs), f(h);
    for (auto& v : observed) v = rng.uniform(1, 500);
    for (auto& v : f) v = rng.uniform(1, 500);
    auto in = featurize_recent(observed, bundle(f), length);
    REQUIRE(static_cast<std::size_t>(in.features.size()) == length);
    const std::size_t kept = std::min(n_obs, length - h);
    const std::size_t pad = length - kept - h;
    double mean = 0;
    for (std::size_t i = 0; i < pad; ++i) CHECK(in.features[static_cast<Eigen::Index>(i)] == 0.0);
    for (std::size_t i = pad; i < pad + kept; ++i) mean += in.features[static_cast<Eigen::Index>(i)];
    CHECK(std::abs(mean / kept - 1.0) < 1e-12);
  }
}

TEST_CASE("build_error_dataset examples") {
  std::vector<TimeSeries> flat{TimeSeries::from_values("a", std::vector<double>(10, 10.0))};
  auto d = build_error_dataset(flat, ForecasterSpec::of(ForecasterKind::rw), 2, 16);
  REQUIRE(d.size() == 1);
  CHECK(d.targets[0] == 0.0);

  std::vector<double> line;
  for (int i = 1; i <= 12; ++i) line.push_back(i);
  std::vector<TimeSeries> linear{TimeSeries::from_values("b", line)};
  d = build_error_dataset(linear, ForecasterSpec::of(ForecasterKind::holt), 2, 16);
  CHECK(std::abs(d.targets[0]) < 1e-9);

  std::vector<double> jump;
  for (int i = 1; i <= 11; ++i) jump.push_back(i);
  jump.push_back(20);
  std::vector<TimeSeries> jumpy{TimeSeries::from_values("c", jump)};
  d = build_error_dataset(jumpy, ForecasterSpec::of(ForecasterKind::rw), 1, 16);
  CHECK(d.targets[0] == doctest::Approx(2.0 * 9.0 / 31.0).epsilon(1e-9));

  CHECK_THROWS_AS(build_error_dataset(std::span<const TimeSeries>{}, ForecasterSpec::of(ForecasterKind::rw), 1, 16),
                  UsageError);
  std::vector<TimeSeries> too_short{TimeSeries::from_values("x", std::vector<double>(5, 1.0))};
  CHECK_THROWS_AS(build_error_dataset(too_short, ForecasterSpec::of(ForecasterKind::rw), 1, 16), DataError);
}

TEST_CASE("build_error_dataset is ordered, skips failures, and round-trips its targets") {
  Rng rng(5);
  std::vector<TimeSeries> set;
  for (int i = 9; i >= 0; --i) {
    std::vector<double> v;
    for (int t = 0; t < 40; ++t) v.push_back(100 + t + 5 * rng.normal());
    set.push_back(TimeSeries::from_values("s" + std::to_string(i), v));
  }
  set.push_back(TimeSeries::from_values("short", std::vector<double>(6, 1.0)));
  auto d = build_error_dataset(set, ForecasterSpec::of(ForecasterKind::damp), 5, 20, {2, 3});
  CHECK(d.size() == 20);
  REQUIRE(d.failures.size() == 1);
  CHECK(d.failures[0].series_id == "short");
  for (std::size_t i = 1; i < d.size(); ++i)
    CHECK(d.inputs[i - 1].source_series_id <= d.inputs[i].source_series_id);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.inputs[i].monitored_model_id == "damp");
    CHECK(d.forecasts[i].model_id == "damp");
    // independent recomputation of the stored target
    double s = 0;
    for (std::size_t t = 0; t < 5; ++t) {
      const double y = d.actuals[i][t], f = d.forecasts[i].values[t];
      s += 2 * std::abs(y - f) / (std::abs(y) + std::abs(f));
    }
    CHECK(d.targets[static_cast<Eigen::Index>(i)] == doctest::Approx(s / 5).epsilon(1e-12));
  }
}

TEST_CASE("GP marginal likelihood gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    Eigen::MatrixXd x(10, 3);
    Eigen::VectorXd y(10);
    for (auto& v : x.reshaped()) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    ArdHyperparameters<double> p;
    p.signal_variance = rng.uniform(0.5, 2);
    p.lengthscales = Eigen::Vector3d(rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2));
    p.noise_variance = rng.uniform(0.05, 0.5);
    const auto ml = log_marginal_likelihood(x, y, p);
    const Eigen::VectorXd theta = p.to_log();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd hi = theta, lo = theta;
      hi[k] += 1e-5;
      lo[k] -= 1e-5;
      const double fd = (log_marginal_likelihood(x, y, ArdHyperparameters<double>::from_log(hi), false).value -
                         log_marginal_likelihood(x, y, ArdHyperparameters<double>::from_log(lo), false).value) /
                        2e-5;
      CHECK(std::abs(ml.gradient[k] - fd) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
  }
}

TEST_CASE("GP posterior properties") {
  Rng rng(1);
  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  for (auto& v : x.reshaped()) v = rng.uniform(0, 3);
  for (auto& v : y) v = rng.uniform(0.1, 0.5);
  ArdHyperparameters<double> p{0.2, Eigen::Vector2d(0.7, 1.3), 1e-8};
  auto gp = GaussianProcess<double>::condition(x, y, p);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(std::abs(gp.predict(x.row(i).transpose()).mean - y[i]) < 1e-3);

  const auto far = gp.predict(Eigen::Vector2d(1e3, -1e3));
  CHECK(std::abs(far.mean) < 1e-12);
  CHECK(far.variance == doctest::Approx(0.2 + 1e-8));

  for (int trial = 0; trial < 200; ++trial) {
    const auto pr = gp.predict(Eigen::Vector2d(rng.uniform(-2, 5), rng.uniform(-2, 5)));
    CHECK(pr.variance >= 0.0);
    CHECK(pr.variance <= 0.2 + 1e-8 + 1e-9);
  }
}

TEST_CASE("train_gp") {
  auto data = random_dataset(7, 30, 3);
  GpTrainOptions options;
  options.max_iterations = 200;
  options.learning_rate = 0.01;
  auto monitor = train_gp(data, options);
  CHECK(monitor.kind() == MonitorKind::gp);
  CHECK(monitor.train_log.final_objective >= monitor.train_log.initial_objective);
  CHECK(monitor.train_log.iterations <= 200);
  const auto& gp = std::get<GaussianProcess<double>>(monitor.model);
  CHECK(gp.hyperparameters().signal_variance > 0);
  CHECK(gp.hyperparameters().noise_variance > 0);
  CHECK((gp.hyperparameters().lengthscales.array() > 0).all());
  for (const auto& in : data.inputs) {
    auto pe = predict_gp(monitor, in);
    CHECK(pe.mean >= 0.0);
    CHECK(pe.mean <= 2.0);
    REQUIRE(pe.std.has_value());
    CHECK(*pe.std >= 0.0);
  }

  // conflicting targets at one input: noise absorbs the discrepancy
  ErrorDataset twin;
  twin.monitored_model_id = "g";
  twin.feature_length = 2;
  twin.inputs = {MonitoringInput{Eigen::Vector2d(1, 1), "a", "g"}, MonitoringInput{Eigen::Vector2d(1, 1), "b", "g"}};
  twin.targets = Eigen::Vector2d(0.1, 0.3);
  auto m2 = train_gp(twin, options);
  CHECK(std::isfinite(m2.train_log.final_objective));

  GpTrainOptions capped = options;
  capped.max_exact_points = 10;
  CHECK_THROWS_AS(train_gp(data, capped), UsageError);
  capped.subset_size = 10;
  auto subset = train_gp(data, capped);
  CHECK(std::get<GaussianProcess<double>>(subset.model).inputs().rows() == 10);
}

TEST_CASE("train_mcdropout") {
  auto data = random_dataset(8, 64, 4);
  DropoutTrainOptions options;
  options.epochs = 50;
  options.seed = 3;
  auto a = train_mcdropout(data, options);
  auto b = train_mcdropout(data, options);
  CHECK(a.train_log.final_objective <= a.train_log.initial_objective);
  CHECK(std::get<DropoutMonitor>(a.model).net == std::get<DropoutMonitor>(b.model).net);

  const auto p1 = predict_mcdropout(a, data.inputs[0], 100, 9);
  const auto p2 = predict_mcdropout(a, data.inputs[0], 100, 9);
  CHECK(p1.mean == p2.mean);
  CHECK(p1.std == p2.std);
  REQUIRE(p1.std.has_value());
  CHECK(*p1.std > 0.0);
  CHECK(predict_mcdropout(a, data.inputs[0], 1, 9).std == 0.0);
}

TEST_CASE("mcdropout without dropout fits a constant target") {
  auto data = random_dataset(9, 256, 4);
  data.targets.setConstant(0.3);
  DropoutTrainOptions options;
  options.dropout_rate = 0.0;
  options.seed = 1;
  auto monitor = train_mcdropout(data, options);
  CHECK_FALSE(monitor.probabilistic());
  for (std::size_t i = 0; i < 20; ++i) {
    const auto p = predict_mcdropout(monitor, data.inputs[i], 100, i);
    CHECK_FALSE(p.std.has_value());
    CHECK(std::abs(p.mean - 0.3) < 0.05);
  }
}

TEST_CASE("holdout_baseline examples") {
  auto p = holdout_baseline(TimeSeries::from_values("a", std::vector{1.0, 2.0, 3.0, 4.0}),
                            ForecasterSpec::of(ForecasterKind::rw), 2);
  CHECK(p.mean == doctest::Approx(0.5333333333333333).epsilon(1e-9));
  CHECK_FALSE(p.std.has_value());

  for (auto kind : {ForecasterKind::ses, ForecasterKind::holt, ForecasterKind::damp})
    CHECK(holdout_baseline(TimeSeries::from_values("b", std::vector<double>(20, 5.0)),
                           ForecasterSpec::of(kind), 6)
              .mean == 0.0);

  std::vector<double> line;
  for (int i = 0; i < 20; ++i) line.push_back(3.0 + 2.0 * i);
  CHECK(holdout_baseline(TimeSeries::from_values("c", line), ForecasterSpec::of(ForecasterKind::holt), 5).mean <
        1e-9);

  CHECK_THROWS_AS(holdout_baseline(TimeSeries::from_values("d", std::vector{1.0, 2.0}),
                                   ForecasterSpec::of(ForecasterKind::rw), 2),
                  DataError);
}

TEST_CASE("evaluate_monitor examples") {
  std::vector<PredictedError> perfect{{0.1, {}}, {0.2, {}}};
  CHECK(evaluate_monitor(perfect, std::vector{0.1, 0.2}).value == 0.0);
  std::vector<PredictedError> off{{0.1, {}}, {0.3, {}}};
  CHECK(evaluate_monitor(off, std::vector{0.2, 0.2}).value == doctest::Approx(0.1).epsilon(1e-12));
  std::vector<PredictedError> single{{0.0, {}}};
  CHECK(evaluate_monitor(single, std::vector{2.0}).value == 2.0);
  CHECK_THROWS_AS(evaluate_monitor(single, std::vector{1.0, 2.0}), UsageError);
}

TEST_CASE("oracle monitor scores the evaluated window") {
  OracleMonitor oracle({{"s", {1, 2, 3, 4, 5}}});
  const std::vector<double> observed{1, 2, 3};
  const std::vector<double> f{4, 10};
  PredictionQuery q{"s", "g", observed, f, 1};
  CHECK(oracle.predict(q).mean == 0.0);
  q.evaluation_length = 2;
  CHECK(oracle.predict(q).mean == doctest::Approx(2.0 * 5.0 / 15.0 / 2.0));
}
