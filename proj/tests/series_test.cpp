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
#include <vector>

#include "doctest.h"
#include "fmon/error.hpp"
#include "fmon/rng.hpp"
#include "fmon/series.hpp"

using namespace fmon;

namespace {

TimeSeries with_missing(std::vector<std::optional<double>> values) {
  return TimeSeries{"s", std::move(values)};
}

}  // namespace

TEST_CASE("smape examples") {
  CHECK(smape(std::vector{5.0, 5.0}, std::vector{5.0, 5.0}).value == 0.0);
  CHECK(smape(std::vector{0.0, 0.0}, std::vector{5.0, 5.0}).value == 2.0);
  // (2*10/210 + 2*20/380) / 2
  CHECK(smape(std::vector{100.0, 200.0}, std::vector{110.0, 180.0}).value ==
        doctest::Approx(0.10025062656641603).epsilon(1e-9));
}

TEST_CASE("smape errors") {
  CHECK_THROWS_AS(smape(std::vector{1.0}, std::vector{1.0, 2.0}), UsageError);
  CHECK_THROWS_AS(smape(std::vector<double>{}, std::vector<double>{}), UsageError);
  try {
    smape(std::vector{1.0, 0.0}, std::vector{1.0, 0.0});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("smape properties on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto h = static_cast<std::size_t>(rng.integer(1, 20));
    std::vector<double> y(h), f(h);
    for (std::size_t i = 0; i < h; ++i) {
      y[i] = rng.uniform(-100, 100);
      f[i] = rng.bernoulli(0.1) ? 0.0 : rng.uniform(-100, 100);
    }
    const double s = smape(y, f);
    CHECK(s >= 0.0);
    CHECK(s <= 2.0);
    CHECK(smape(f, y).value == doctest::Approx(s).epsilon(1e-14));
    const double c = rng.uniform(0.01, 1000);
    std::vector<double> yc(h), fc(h);
    for (std::size_t i = 0; i < h; ++i) {
      yc[i] = c * y[i];
      fc[i] = c * f[i];
    }
    CHECK(std::abs(smape(yc, fc).value - s) < 1e-12);
  }
}

TEST_CASE("rmse examples") {
  CHECK(rmse(std::vector{1.0, 2.0}, std::vector{1.0, 2.0}).value == 0.0);
  CHECK(rmse(std::vector{0.0, 0.0}, std::vector{3.0, 4.0}).value ==
        doctest::Approx(3.5355339059327378).epsilon(1e-12));
  CHECK(rmse(std::vector{1.0}, std::vector{4.0}).value == 3.0);
  CHECK_THROWS_AS(rmse(std::vector{1.0}, std::vector{1.0, 2.0}), UsageError);
}

TEST_CASE("fill_missing_nearest_past") {
  auto filled = fill_missing_nearest_past(with_missing({1.0, std::nullopt, 3.0}));
  CHECK(filled.dense() == std::vector{1.0, 1.0, 3.0});

  filled = fill_missing_nearest_past(with_missing({1.0, 2.0, 3.0}));
  CHECK(filled.dense() == std::vector{1.0, 2.0, 3.0});

  filled = fill_missing_nearest_past(with_missing({std::nullopt, 2.0, std::nullopt}));
  CHECK(filled.dense() == std::vector{2.0, 2.0});

  CHECK_THROWS_AS(fill_missing_nearest_past(with_missing({std::nullopt, std::nullopt})), DataError);
}

TEST_CASE("fill_missing_nearest_past is idempotent") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    TimeSeries s{"r", {}};
    const auto n = rng.integer(1, 30);
    for (int i = 0; i < n; ++i) {
      if (rng.bernoulli(0.3)) s.values.push_back(std::nullopt);
      else s.values.push_back(rng.uniform(1, 10));
    }
    if (std::none_of(s.values.begin(), s.values.end(), [](auto v) { return v.has_value(); }))
      continue;
    const auto once = fill_missing_nearest_past(s);
    CHECK_FALSE(once.has_missing());
    CHECK(fill_missing_nearest_past(once) == once);
  }
}

TEST_CASE("split_train_holdout") {
  std::vector<double> v(10);
  for (int i = 0; i < 10; ++i) v[i] = i + 1.0;
  auto split = split_train_holdout(TimeSeries::from_values("a", v), 3);
  CHECK(split.train.size() == 7);
  CHECK(split.holdout == std::vector{8.0, 9.0, 10.0});

  std::vector<double> nine(9, 1.0);
  CHECK_THROWS_AS(split_train_holdout(TimeSeries::from_values("b", nine), 8), DataError);

  std::vector<double> twenty(20);
  for (int i = 0; i < 20; ++i) twenty[i] = i + 1.0;
  split = split_train_holdout(TimeSeries::from_values("c", twenty), 5);
  CHECK(split.holdout == std::vector{16.0, 17.0, 18.0, 19.0, 20.0});

  auto joined = split.train.dense();
  joined.insert(joined.end(), split.holdout.begin(), split.holdout.end());
  CHECK(joined == twenty);
}
