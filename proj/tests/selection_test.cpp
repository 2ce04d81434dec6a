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

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "fmon/error.hpp"
#include "fmon/forecasters.hpp"
#include "fmon/monitor.hpp"
#include "fmon/rng.hpp"
#include "fmon/selection.hpp"
#include "fmon/wilcoxon.hpp"

using namespace fmon;

namespace {

// Full 2^n sign enumeration with ranks recomputed by pairwise counting.
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> mags;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;
    mags.push_back(std::abs(d));
    positive.push_back(d > 0);
  }
  const std::size_t n = mags.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mags[j] < mags[i]) ++below;
      if (mags[j] == mags[i]) ++equal;
    }
    rank[i] = below + (equal + 1) / 2;
  }
  auto w_of = [&](auto sign_positive) {
    double plus = 0, minus = 0;
    for (std::size_t i = 0; i < n; ++i) (sign_positive(i) ? plus : minus) += rank[i];
    return std::min(plus, minus);
  };
  const double observed = w_of([&](std::size_t i) { return bool(positive[i]); });
  double hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask)
    if (w_of([&](std::size_t i) { return ((mask >> i) & 1) != 0; }) <= observed + 1e-9) ++hits;
  return hits / static_cast<double>(std::uint64_t{1} << n);
}

std::vector<double> wavy_series(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> y;
  double level = 50;
  for (std::size_t t = 0; t < n; ++t) {
    if (t == n - 25) level *= 1.4;
    level += 0.3;
    y.push_back(level * (1.0 + 0.15 * std::sin(0.7 * static_cast<double>(t))) * (1.0 + 0.03 * rng.normal()));
  }
  return y;
}

std::vector<FittedForecaster> test_pool(const std::vector<double>& y, std::size_t origin) {
  std::vector<ForecasterSpec> specs{ForecasterSpec::of(ForecasterKind::damp), ForecasterSpec::of(ForecasterKind::holt),
                                    ForecasterSpec::of(ForecasterKind::rw), ForecasterSpec::of(ForecasterKind::ses),
                                    ForecasterSpec::of(ForecasterKind::theta)};
  return fit_pool(specs, std::span(y.data(), origin));
}

struct ConstantMonitor final : ErrorPredictor {
  double mean;
  explicit ConstantMonitor(double m) : mean(m) {}
  PredictedError predict(const PredictionQuery&) const override { return {mean, 0.0}; }
  bool probabilistic() const override { return true; }
};

}  // namespace

TEST_CASE("wilcoxon examples") {
  const std::vector<double> a{0.1, 0.4, 0.3};
  auto same = wilcoxon_signed_rank(a, a);
  CHECK(same.p_value == 1.0);
  CHECK(same.reduced_n == 0);

  const std::vector<double> x{2, 4, 6}, y{1, 2, 3};
  auto r = wilcoxon_signed_rank(x, y);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.exact);

  CHECK_THROWS_AS(wilcoxon_signed_rank(x, std::vector<double>{1, 2}), UsageError);
}

TEST_CASE("wilcoxon is symmetric in its arguments") {
  Rng rng(3);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.uniform(0, 6));
      b[i] = std::round(rng.uniform(0, 6));
    }
    auto ab = wilcoxon_signed_rank(a, b);
    auto ba = wilcoxon_signed_rank(b, a);
    CHECK(ab.p_value == ba.p_value);
    CHECK(ab.statistic == ba.statistic);
  }
}

TEST_CASE("wilcoxon exact path matches full enumeration") {
  Rng rng(11);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> a(n), b(n);
    const bool ties = c % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = ties ? std::round(rng.uniform(0, 4)) : rng.uniform();
      b[i] = ties ? std::round(rng.uniform(0, 4)) : rng.uniform();
    }
    CHECK(std::abs(wilcoxon_signed_rank(a, b).p_value - enumerate_p(a, b)) <= 1e-12);
  }
}

TEST_CASE("wilcoxon normal approximation is calibrated at n=20") {
  Rng rng(5);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> a(20), b(20);
    const double shift = rng.uniform(-0.5, 0.5);
    for (std::size_t i = 0; i < 20; ++i) {
      a[i] = rng.normal() + shift;
      b[i] = rng.normal();
    }
    auto exact = wilcoxon_signed_rank(a, b, 20);
    auto approx = wilcoxon_signed_rank(a, b, 0);
    REQUIRE(exact.exact);
    REQUIRE_FALSE(approx.exact);
    CHECK(std::abs(exact.p_value - approx.p_value) <= 0.02);
  }
}

TEST_CASE("rank_models examples") {
  auto r = rank_models(std::map<std::string, std::vector<double>>{{"first", {0.2, 0.2}}, {"second", {0.1, 0.1}}});
  CHECK(r.order() == std::vector<std::string>{"second", "first"});
  CHECK(r.adjacent_significance.size() == 1);

  const std::vector<double> v{0.3, 0.1, 0.5, 0.2};
  auto twin = rank_models(std::map<std::string, std::vector<double>>{{"b", v}, {"a", v}});
  CHECK(twin.order() == std::vector<std::string>{"a", "b"});
  CHECK(twin.adjacent_significance == std::vector<bool>{false});

  CHECK_THROWS_AS(rank_models(std::map<std::string, std::vector<double>>{{"a", {0.1}}, {"b", {0.1, 0.2}}}),
                  UsageError);

  std::map<std::string, std::vector<PredictedError>> preds{{"x", {{0.4, 0.1}, {0.2, std::nullopt}}},
                                                           {"y", {{0.1, 0.1}, {0.1, 0.1}}}};
  auto p = rank_models(preds);
  CHECK(p.order() == std::vector<std::string>{"y", "x"});
  CHECK(p.entries[1].mean_predicted_smape == doctest::Approx(0.3));
}

TEST_CASE("rank_models order survives strictly increasing transforms") {
  Rng rng(8);
  for (int c = 0; c < 50; ++c) {
    std::map<std::string, std::vector<double>> raw, moved;
    for (int m = 0; m < 6; ++m) {
      const std::string id = "m" + std::to_string(m);
      const double level = rng.uniform(0.05, 0.5);
      for (int s = 0; s < 30; ++s) {
        // a per-model constant keeps means and transformed means in the same order
        raw[id].push_back(level);
        moved[id].push_back(std::exp(3 * level) - 1);
      }
    }
    CHECK(rank_models(raw).order() == rank_models(moved).order());
  }
}

TEST_CASE("select_best examples") {
  auto one = rank_models(std::map<std::string, std::vector<double>>{{"only", {0.4}}});
  CHECK(select_best(one) == "only");
  auto two = rank_models(std::map<std::string, std::vector<double>>{{"hi", {0.3}}, {"lo", {0.1}}});
  CHECK(select_best(two) == "lo");
  auto tie = rank_models(std::map<std::string, std::vector<double>>{{"zeta", {0.1}}, {"alpha", {0.1}}});
  CHECK(select_best(tie) == "alpha");
  CHECK_THROWS_AS(select_best(Ranking{}), UsageError);
}

TEST_CASE("dynamic_select structure") {
  const auto y = wavy_series(1, 140);
  const std::size_t origin = 110, h = 30;
  const auto pool = test_pool(y, origin);
  const TimeSeries series = TimeSeries::from_values("s", y);
  OracleMonitor oracle({{"s", y}});
  MonitorSet monitors;
  for (const auto& m : pool) monitors[m.id()] = &oracle;

  for (std::size_t period : {1u, 4u, 7u, 10u, 30u}) {
    auto trace = dynamic_select(series, pool, monitors, h, period);
    CHECK(trace.checkpoints.size() == (h + period - 1) / period);
    CHECK(trace.checkpoints.front().time_step == origin);
    CHECK(trace.forecasts.size() == h);
    for (std::size_t i = 1; i < trace.checkpoints.size(); ++i)
      CHECK(trace.checkpoints[i].time_step > trace.checkpoints[i - 1].time_step);
  }

  MonitorSet partial = monitors;
  partial.erase("rw");
  CHECK_THROWS_AS(dynamic_select(series, pool, partial, h, 10), UsageError);
  CHECK_THROWS_AS(dynamic_select(series, pool, monitors, h, 0), UsageError);
  CHECK_THROWS_AS(dynamic_select(series, pool, monitors, h, h + 1), UsageError);
}

TEST_CASE("dynamic_select with one model equals the fixed run") {
  const auto y = wavy_series(2, 150);
  const std::size_t origin = 120, h = 30;
  const auto pool = test_pool(y, origin);
  ConstantMonitor c(0.1);
  for (const auto& m : pool) {
    MonitorSet monitors{{m.id(), &c}};
    auto trace = dynamic_select(TimeSeries::from_values("s", y), std::span(&m, 1), monitors, h, 10);
    // fixed run: advance the frozen model at each checkpoint and keep its next 10 forecasts
    std::vector<double> fixed;
    FittedForecaster state = m;
    for (std::size_t t = 0; t < h; t += 10) {
      if (t > 0) state = update_state(state, std::span(y.data() + origin + t - 10, 10));
      auto f = forecast(state, h - t).values;
      fixed.insert(fixed.end(), f.begin(), f.begin() + 10);
    }
    CHECK(trace.forecasts == fixed);
    for (const auto& cp : trace.checkpoints) CHECK(cp.chosen == m.id());
  }
}

TEST_CASE("oracle monitors make dynamic selection dominate every fixed model per period") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto y = wavy_series(100 + seed, 160);
    const std::size_t origin = 130, h = 30, period = 10;
    const auto pool = test_pool(y, origin);
    const TimeSeries series = TimeSeries::from_values("s" + std::to_string(seed), y);
    OracleMonitor oracle({{series.id, y}});
    MonitorSet monitors;
    for (const auto& m : pool) monitors[m.id()] = &oracle;

    auto dynamic = dynamic_select(series, pool, monitors, h, period);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      auto fixed = dynamic_select(series, std::span(&pool[i], 1), monitors, h, period);
      for (std::size_t p = 0; p < dynamic.realized_smape_per_period.size(); ++p)
        CHECK(dynamic.realized_smape_per_period[p] <= fixed.realized_smape_per_period[p]);
    }
    for (const auto& cp : dynamic.checkpoints)
      for (const auto& [id, e] : cp.predicted) CHECK(cp.predicted.at(cp.chosen).mean <= e.mean);
  }
}
