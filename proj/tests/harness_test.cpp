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
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "fmon/error.hpp"
#include "fmon/harness.hpp"

using namespace fmon;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("fmon_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kSmall = R"({"synthetic": {"n_series": 24, "length": [100, 140]},
 "monitor": {"gp": {"learning_rate": 0.05, "max_iterations": 20}},
 "pool": [{"kind": "ses", "hyperparameters": {"m": 7}}, {"kind": "holt"}, {"kind": "theta", "hyperparameters": {"m": 7}}],
 "seed": 3})";

RunConfig small(const std::string& out = "out") {
  RunConfig c = parse_run_config(kSmall);
  c.out = out;
  return c;
}

}  // namespace

TEST_CASE("run config defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.horizon == 30);
  CHECK(c.period == 10);
  CHECK(c.feature_length == 128);
  CHECK(c.train_fraction == 0.75);
  CHECK(c.monitor.kind == MonitorKind::gp);
  CHECK(c.pool == default_pool(7));
  CHECK(c.synthetic_config().seed == 0);
  CHECK(parse_run_config(R"({"seed": 12})").synthetic_config().seed == 12);
  CHECK(parse_run_config(R"({"seed": 12, "synthetic": {"seed": 4}})").synthetic_config().seed == 4);
  CHECK(parse_run_config(R"({"data": "x.csv"})").pool == default_pool(1));
}

TEST_CASE("run config rejects bad documents") {
  for (const char* text : {
           "{",
           "[]",
           R"({"horizon": 30, "colour": 1})",
           R"({"horizon": "thirty"})",
           R"({"period": 31})",
           R"({"feature_length": 20})",
           R"({"train_fraction": 1.0})",
           R"({"pool": []})",
           R"({"pool": [{"kind": "ses"}, {"kind": "ses"}]})",
           R"({"pool": [{"kind": "arima"}]})",
           R"({"incumbent": "rw"})",
           R"({"data": "a.csv", "synthetic": {}})",
           R"({"policy": {"smape_threshold": 3}})",
           R"({"monitor": {"gp": {"learning_rate": 0}}})",
           R"({"monitor": {"kind": "lstm"}})",
       }) {
    INFO(text);
    CHECK_THROWS_AS(parse_run_config(text), UsageError);
  }
}

TEST_CASE("config fingerprint") {
  const RunConfig a = parse_run_config(R"({"seed": 1, "horizon": 20, "pool": [{"kind": "holt"}, {"kind": "ses"}]})");
  const RunConfig b = parse_run_config(R"({"pool": [{"kind": "ses"}, {"kind": "holt"}], "horizon": 20, "seed": 1})");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a).size() == 16);

  RunConfig moved = a;
  moved.out = "elsewhere";
  CHECK(config_fingerprint(moved) == config_fingerprint(a));

  RunConfig longer = a;
  longer.horizon = 21;
  CHECK(config_fingerprint(longer) != config_fingerprint(a));
  RunConfig reseeded = a;
  reseeded.seed = 2;
  CHECK(config_fingerprint(reseeded) != config_fingerprint(a));
}

TEST_CASE("oracle monitors predict the truth exactly") {
  HarnessOptions oracle;
  oracle.oracle_monitors = true;
  const Experiment e = Experiment::prepare(small(), oracle);
  CHECK(e.oracle());
  CHECK(e.monitors().empty());
  const auto rows = evaluate(e);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.monitor_rmse == 0.0);
    CHECK(r.test_series == e.test_series().size());
  }
  const auto tables = rank(rows);
  CHECK(tables.predicted.order() == tables.truth.order());

  const Experiment view = Experiment::prepare(small()).with_oracle_monitors();
  CHECK(view.oracle());
  for (const auto& r : evaluate(view)) CHECK(r.monitor_rmse == 0.0);
}

TEST_CASE("ingestion and split") {
  const Experiment e = Experiment::prepare(small());
  CHECK(e.ingestion().total == 24);
  CHECK(e.ingestion().kept == 24);
  CHECK(e.train_series().size() == 18);
  CHECK(e.test_series().size() + e.failures().size() >= 6);
  CHECK(e.monitors().size() == 3);
  for (const auto& t : e.test_series()) {
    CHECK(t.origin + 30 == t.y.size());
    CHECK(t.truth.size() == 3);
  }
  // train and test do not overlap
  for (const auto& t : e.test_series())
    for (const auto& s : e.train_series()) CHECK(s.id != t.series.id);
}

TEST_CASE("ingestion errors") {
  const fs::path dir = scratch_dir("ingest");
  RunConfig c = small();
  c.synthetic.reset();
  c.data = (dir / "short.csv").string();
  std::ofstream(dir / "short.csv") << "series_id,values\nA,1,2,3\nB,4,5,6\n";
  CHECK_THROWS_AS(Experiment::prepare(c), DataError);

  std::string negative = "series_id,values\n";
  for (const char* id : {"A", "B", "C"}) {
    negative += id;
    for (int t = 0; t < 120; ++t) negative += "," + std::to_string(t == 50 && id[0] == 'B' ? -1 : 10 + t % 7);
    negative += "\n";
  }
  std::ofstream(dir / "negative.csv") << negative;
  c.data = (dir / "negative.csv").string();
  CHECK_THROWS_AS(Experiment::prepare(c), DataError);
  fs::remove_all(dir);
}

TEST_CASE("a one-model pool gives one row and a dynamic run equal to the fixed run") {
  RunConfig c = small();
  c.pool = {ForecasterSpec::of(ForecasterKind::holt)};
  const Experiment e = Experiment::prepare(c);
  CHECK(evaluate(e).size() == 1);
  const auto sim = simulate(e);
  const auto& fixed = sim.fixed.at("holt");
  REQUIRE(fixed.size() == sim.dynamic.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) CHECK(fixed[i].forecasts == sim.dynamic[i].forecasts);
  CHECK(sim.overall.at("dynamic") == sim.overall.at("fixed:holt"));
}

TEST_CASE("identical specs under two ids tie in the ranking") {
  RunConfig c = small();
  c.pool.push_back(ForecasterSpec::of(ForecasterKind::holt, "holt_copy"));
  HarnessOptions oracle;
  oracle.oracle_monitors = true;
  const auto tables = rank(evaluate(Experiment::prepare(c, oracle)));
  const auto order = tables.truth.order();
  const auto at = std::find(order.begin(), order.end(), "holt") - order.begin();
  const auto copy_at = std::find(order.begin(), order.end(), "holt_copy") - order.begin();
  REQUIRE(std::abs(at - copy_at) == 1);
  const auto first = static_cast<std::size_t>(std::min(at, copy_at));
  CHECK_FALSE(tables.truth.adjacent_significance[first]);
  CHECK(tables.truth.adjacent_p_values[first] == 1.0);
}

TEST_CASE("always-alert sentinel follows dynamic selection") {
  RunConfig c = small();
  c.policy = {0.0, 0.01, true};
  HarnessOptions oracle;
  oracle.oracle_monitors = true;
  const Experiment e = Experiment::prepare(c, oracle);
  const auto r = run_sentinel_simulation(e);
  REQUIRE(r.sentinel.size() == r.dynamic.size());
  for (std::size_t i = 0; i < r.dynamic.size(); ++i)
    CHECK(r.sentinel[i].realized_smape_per_period == r.dynamic[i].realized_smape_per_period);
  CHECK(r.overall.at("sentinel") == r.overall.at("dynamic"));
  CHECK(r.alerts.size() == r.dynamic.size() * 3);
}

TEST_CASE("reports do not depend on pool order") {
  const fs::path dir = scratch_dir("order");
  RunConfig a = small((dir / "a").string());
  RunConfig b = small((dir / "b").string());
  std::reverse(b.pool.begin(), b.pool.end());
  run_command("rank", a);
  run_command("rank", b);
  CHECK(slurp(dir / "a" / "rank.csv") == slurp(dir / "b" / "rank.csv"));
  CHECK(slurp(dir / "a" / "rank.json") == slurp(dir / "b" / "rank.json"));
  fs::remove_all(dir);
}

TEST_CASE("generate is reproducible and needs synthetic data") {
  const fs::path dir = scratch_dir("generate");
  run_command("generate", small((dir / "a").string()));
  run_command("generate", small((dir / "b").string()));
  const std::string bytes = slurp(dir / "a" / "dataset.csv");
  CHECK(bytes.starts_with("series_id,"));
  CHECK(bytes == slurp(dir / "b" / "dataset.csv"));
  CHECK(load_csv(dir / "a" / "dataset.csv").size() == 24);

  RunConfig csv = small((dir / "c").string());
  csv.synthetic.reset();
  csv.data = (dir / "a" / "dataset.csv").string();
  CHECK_THROWS_AS(run_command("generate", csv), UsageError);
  CHECK_THROWS_AS(run_command("train", small((dir / "d").string())), UsageError);

  // the generated file reproduces the synthetic run
  run_command("rank", csv);
  RunConfig synthetic = small((dir / "e").string());
  run_command("rank", synthetic);
  CHECK(slurp(dir / "c" / "rank.csv") == slurp(dir / "e" / "rank.csv"));
  fs::remove_all(dir);
}
