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

#include "fmon/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "fmon/error.hpp"
#include "fmon/parallel.hpp"
#include "fmon/rng.hpp"
#include "json.hpp"

namespace fmon {

using nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw UsageError("config: " + std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw UsageError("config: unknown key '" + key + "' in " + std::string(where));
}

template <typename T>
void read(const json& obj, std::string_view key, T& into) {
  if (auto it = obj.find(key); it != obj.end()) into = it->template get<T>();
}

void read_interval(const json& obj, std::string_view key, Interval& into) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array() || it->size() != 2) throw UsageError("config: '" + std::string(key) + "' must be [lo, hi]");
  into = {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

json interval_json(const Interval& r) { return json::array({r.lo, r.hi}); }

SyntheticConfig parse_synthetic(const json& j, bool& has_seed) {
  check_keys(j,
             {"n_series", "length", "base_price", "slope", "period", "amplitude", "noise", "drift", "missing", "seed"},
             "synthetic");
  SyntheticConfig c;
  read(j, "n_series", c.n_series);
  read_interval(j, "length", c.length);
  read_interval(j, "base_price", c.base_price);
  read_interval(j, "slope", c.slope);
  read(j, "period", c.period);
  read_interval(j, "amplitude", c.amplitude);
  read(j, "noise", c.noise);
  if (auto d = j.find("drift"); d != j.end()) {
    check_keys(*d, {"probability", "onset_fraction", "level_shift", "slope_change"}, "synthetic.drift");
    read(*d, "probability", c.drift.probability);
    read_interval(*d, "onset_fraction", c.drift.onset_fraction);
    read_interval(*d, "level_shift", c.drift.level_shift);
    read_interval(*d, "slope_change", c.drift.slope_change);
  }
  if (auto m = j.find("missing"); m != j.end()) {
    check_keys(*m, {"gap_probability", "gap_length"}, "synthetic.missing");
    read(*m, "gap_probability", c.missing.gap_probability);
    read_interval(*m, "gap_length", c.missing.gap_length);
  }
  has_seed = j.contains("seed");
  read(j, "seed", c.seed);
  return c;
}

json synthetic_json(const SyntheticConfig& c) {
  return {{"n_series", c.n_series},
          {"length", interval_json(c.length)},
          {"base_price", interval_json(c.base_price)},
          {"slope", interval_json(c.slope)},
          {"period", c.period},
          {"amplitude", interval_json(c.amplitude)},
          {"noise", c.noise},
          {"drift",
           {{"probability", c.drift.probability},
            {"onset_fraction", interval_json(c.drift.onset_fraction)},
            {"level_shift", interval_json(c.drift.level_shift)},
            {"slope_change", interval_json(c.drift.slope_change)}}},
          {"missing",
           {{"gap_probability", c.missing.gap_probability}, {"gap_length", interval_json(c.missing.gap_length)}}},
          {"seed", c.seed}};
}

ForecasterSpec parse_spec(const json& j) {
  if (j.is_string()) {
    const auto kind = forecaster_kind_from_string(j.get<std::string>());
    return ForecasterSpec::of(kind);
  }
  check_keys(j, {"id", "kind", "hyperparameters"}, "pool entry");
  if (!j.contains("kind")) throw UsageError("config: pool entry needs a 'kind'");
  const auto kind = forecaster_kind_from_string(j.at("kind").get<std::string>());
  ForecasterSpec spec = ForecasterSpec::of(kind, j.value("id", std::string{}));
  read(j, "hyperparameters", spec.hyperparameters);
  return spec;
}

// Marks a synthetic block whose seed should follow the run seed.
constexpr std::uint64_t kFollowRunSeed = std::numeric_limits<std::uint64_t>::max();

}  // namespace

std::vector<ForecasterSpec> default_pool(std::size_t m) {
  std::vector<ForecasterSpec> pool;
  for (auto k : {ForecasterKind::ses, ForecasterKind::holt, ForecasterKind::damp, ForecasterKind::theta,
                 ForecasterKind::comb, ForecasterKind::rf}) {
    pool.push_back(ForecasterSpec::of(k));
    if (m > 1) pool.back().hyperparameters["m"] = static_cast<double>(m);
  }
  return pool;
}

SyntheticConfig RunConfig::synthetic_config() const {
  SyntheticConfig c = synthetic.value_or(SyntheticConfig{});
  if (!synthetic || c.seed == kFollowRunSeed) c.seed = seed;
  return c;
}

void RunConfig::validate() const {
  if (data && synthetic) throw UsageError("config: give either 'data' or 'synthetic', not both");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("config: train_fraction must lie in (0, 1)");
  if (horizon < 1) throw UsageError("config: horizon must be >= 1");
  if (feature_length < horizon + kMinFitLength)
    throw UsageError("config: feature_length must be at least horizon + " + std::to_string(kMinFitLength));
  if (period < 1 || period > horizon) throw UsageError("config: period must lie in [1, horizon]");
  if (pool.empty()) throw UsageError("config: pool is empty");
  std::set<std::string> ids;
  for (const auto& spec : pool) {
    spec.validate();
    if (!ids.insert(spec.id).second) throw UsageError("config: duplicate pool id '" + spec.id + "'");
  }
  if (incumbent && !ids.contains(*incumbent))
    throw UsageError("config: incumbent '" + *incumbent + "' is not in the pool");
  policy.validate();
  if (monitor.mc_samples < 2) throw UsageError("config: mc_samples must be >= 2");
  if (!(monitor.gp.learning_rate > 0) || monitor.gp.max_iterations == 0)
    throw UsageError("config: GP optimizer needs a positive learning rate and iteration budget");
  if (!(monitor.dropout.learning_rate > 0) || monitor.dropout.epochs == 0 || monitor.dropout.batch_size == 0 ||
      monitor.dropout.hidden == 0 || !(monitor.dropout.dropout_rate >= 0 && monitor.dropout.dropout_rate < 1))
    throw UsageError("config: invalid MC-dropout settings");
  if (synthetic) synthetic_config().validate();
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(j,
               {"data", "synthetic", "horizon", "feature_length", "train_fraction", "monitor", "pool", "period",
                "policy", "incumbent", "seed", "out"},
               "config");
    if (j.contains("data")) c.data = j["data"].get<std::string>();
    if (j.contains("synthetic")) {
      bool has_seed = false;
      c.synthetic = parse_synthetic(j["synthetic"], has_seed);
      if (!has_seed) c.synthetic->seed = kFollowRunSeed;
    }
    read(j, "horizon", c.horizon);
    read(j, "feature_length", c.feature_length);
    read(j, "train_fraction", c.train_fraction);
    read(j, "period", c.period);
    read(j, "seed", c.seed);
    read(j, "out", c.out);
    if (j.contains("incumbent")) c.incumbent = j["incumbent"].get<std::string>();
    if (auto m = j.find("monitor"); m != j.end()) {
      check_keys(*m, {"kind", "gp", "mcdropout"}, "monitor");
      if (m->contains("kind")) c.monitor.kind = monitor_kind_from_string((*m)["kind"].get<std::string>());
      if (auto g = m->find("gp"); g != m->end()) {
        check_keys(*g, {"learning_rate", "max_iterations", "tolerance", "patience", "max_exact_points", "subset_size"},
                   "monitor.gp");
        read(*g, "learning_rate", c.monitor.gp.learning_rate);
        read(*g, "max_iterations", c.monitor.gp.max_iterations);
        read(*g, "tolerance", c.monitor.gp.tolerance);
        read(*g, "patience", c.monitor.gp.patience);
        read(*g, "max_exact_points", c.monitor.gp.max_exact_points);
        read(*g, "subset_size", c.monitor.gp.subset_size);
      }
      if (auto d = m->find("mcdropout"); d != m->end()) {
        check_keys(*d, {"hidden", "dropout_rate", "learning_rate", "batch_size", "epochs", "mc_samples"},
                   "monitor.mcdropout");
        read(*d, "hidden", c.monitor.dropout.hidden);
        read(*d, "dropout_rate", c.monitor.dropout.dropout_rate);
        read(*d, "learning_rate", c.monitor.dropout.learning_rate);
        read(*d, "batch_size", c.monitor.dropout.batch_size);
        read(*d, "epochs", c.monitor.dropout.epochs);
        read(*d, "mc_samples", c.monitor.mc_samples);
      }
    }
    if (auto p = j.find("pool"); p != j.end()) {
      if (!p->is_array()) throw UsageError("config: pool must be a list");
      for (const auto& entry : *p) c.pool.push_back(parse_spec(entry));
    } else {
      // synthetic data is seasonal with a known period; CSV data gets no adjustment
      c.pool = default_pool(c.data ? 1 : c.synthetic_config().period);
    }
    if (auto p = j.find("policy"); p != j.end()) {
      check_keys(*p, {"smape_threshold", "uncertainty_threshold", "require_low_uncertainty"}, "policy");
      read(*p, "smape_threshold", c.policy.smape_threshold);
      if (p->contains("uncertainty_threshold")) {
        const json& u = (*p)["uncertainty_threshold"];
        c.policy.uncertainty_threshold = u.is_null() ? std::nullopt : std::optional<double>(u.get<double>());
      }
      read(*p, "require_low_uncertainty", c.policy.require_low_uncertainty);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string canonical_config(const RunConfig& c) {
  json pool = json::array();
  for (const auto& spec : sorted_pool(c.pool))
    pool.push_back({{"id", spec.id}, {"kind", to_string(spec.kind)}, {"hyperparameters", spec.hyperparameters}});
  json j = {{"horizon", c.horizon},
            {"feature_length", c.feature_length},
            {"train_fraction", c.train_fraction},
            {"period", c.period},
            {"seed", c.seed},
            {"pool", pool},
            {"incumbent", c.incumbent ? json(*c.incumbent) : json(nullptr)},
            {"policy",
             {{"smape_threshold", c.policy.smape_threshold},
              {"uncertainty_threshold",
               c.policy.uncertainty_threshold ? json(*c.policy.uncertainty_threshold) : json(nullptr)},
              {"require_low_uncertainty", c.policy.require_low_uncertainty}}}};
  json monitor = {{"kind", to_string(c.monitor.kind)}};
  // Only the active monitor's settings affect the run.
  if (c.monitor.kind == MonitorKind::gp)
    monitor["gp"] = {{"learning_rate", c.monitor.gp.learning_rate},
                     {"max_iterations", c.monitor.gp.max_iterations},
                     {"tolerance", c.monitor.gp.tolerance},
                     {"patience", c.monitor.gp.patience},
                     {"max_exact_points", c.monitor.gp.max_exact_points},
                     {"subset_size", c.monitor.gp.subset_size}};
  else
    monitor["mcdropout"] = {{"hidden", c.monitor.dropout.hidden},
                            {"dropout_rate", c.monitor.dropout.dropout_rate},
                            {"learning_rate", c.monitor.dropout.learning_rate},
                            {"batch_size", c.monitor.dropout.batch_size},
                            {"epochs", c.monitor.dropout.epochs},
                            {"mc_samples", c.monitor.mc_samples}};
  j["monitor"] = monitor;
  if (c.data)
    j["data"] = *c.data;
  else
    j["synthetic"] = synthetic_json(c.synthetic_config());
  return j.dump();
}

std::string config_fingerprint(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(config))));
  return buf;
}

// ---------------------------------------------------------------- experiment

std::vector<TimeSeries> load_series(const RunConfig& config) {
  if (config.data) return load_csv(*config.data);
  return generate_synthetic(config.synthetic_config());
}

namespace {

// Answers for a single-model pool, where the prediction is never used.
class UnusedPredictor final : public ErrorPredictor {
 public:
  PredictedError predict(const PredictionQuery&) const override { return {0.0, 0.0}; }
  bool probabilistic() const override { return true; }
};

}  // namespace

Experiment Experiment::prepare(const RunConfig& config, const HarnessOptions& options) {
  config.validate();
  Experiment e;
  e.config_ = config;
  e.fingerprint_ = config_fingerprint(config);
  e.oracle_ = options.oracle_monitors;
  e.pool_ = sorted_pool(config.pool);
  const std::size_t h = config.horizon;

  std::vector<TimeSeries> raw = load_series(config);
  std::sort(raw.begin(), raw.end(), [](const TimeSeries& a, const TimeSeries& b) { return a.id < b.id; });
  std::size_t min_fit = kMinFitLength;
  for (const auto& spec : e.pool_) min_fit = std::max(min_fit, minimum_train_length(spec));
  e.ingestion_.total = raw.size();
  e.ingestion_.min_length = 2 * h + min_fit;

  std::vector<TimeSeries> usable;
  for (const auto& s : raw) {
    std::optional<TimeSeries> filled;
    try {
      filled = fill_missing_nearest_past(s);
    } catch (const DataError&) {
    }
    if (!filled || filled->size() < e.ingestion_.min_length) {
      e.ingestion_.dropped.push_back(s.id);
      continue;
    }
    for (const auto& v : filled->values)
      if (!(*v > 0.0)) throw DataError("series '" + s.id + "' has non-positive values");
    usable.push_back(std::move(*filled));
  }
  e.ingestion_.kept = usable.size();
  if (usable.size() < 2)
    throw DataError("need at least 2 series of length >= " + std::to_string(e.ingestion_.min_length) + ", found " +
                    std::to_string(usable.size()));

  // Seeded split by series.
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed ^ fnv1a("split")));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(usable.size()))), 1,
      usable.size() - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) e.train_.push_back(usable[i]);

  e.datasets_ = build_error_datasets(e.train_, e.pool_, h, config.feature_length);
  for (const auto& f : e.datasets_.front().failures) e.failures_.push_back(f);

  std::vector<std::optional<TestSeries>> tests(test_idx.size());
  std::vector<std::optional<std::string>> errors(test_idx.size());
  parallel_for(test_idx.size(), [&](std::size_t k) {
    const TimeSeries& s = usable[test_idx[k]];
    try {
      TestSeries t;
      t.series = s;
      t.y = s.dense();
      t.origin = t.y.size() - h;
      t.fitted = fit_pool(e.pool_, std::span(t.y.data(), t.origin));
      const std::span<const double> actual(t.y.data() + t.origin, h);
      for (const auto& m : t.fitted) {
        t.forecasts.push_back(forecast(m, h).values);
        t.truth.push_back(smape(actual, t.forecasts.back()).value);
      }
      // Same as holdout_baseline per model, with fits shared across the pool.
      t.baseline.assign(e.pool_.size(), std::numeric_limits<double>::quiet_NaN());
      try {
        const std::size_t cut = t.origin - h;
        const auto early = fit_pool(e.pool_, std::span(t.y.data(), cut));
        const std::span<const double> window(t.y.data() + cut, h);
        for (std::size_t m = 0; m < early.size(); ++m) t.baseline[m] = smape(window, forecast(early[m], h).values).value;
      } catch (const DataError&) {
      }
      tests[k] = std::move(t);
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  });
  for (std::size_t k = 0; k < tests.size(); ++k) {
    if (tests[k])
      e.tests_.push_back(std::move(*tests[k]));
    else
      e.failures_.push_back({usable[test_idx[k]].id, *errors[k]});
  }
  if (e.tests_.empty()) throw DataError("every test series failed");

  if (e.oracle_) {
    e.attach_oracle();
    return e;
  }

  e.monitors_.resize(e.pool_.size());
  parallel_for(e.pool_.size(), [&](std::size_t m) {
    const std::uint64_t seed = mix_seed(config.seed ^ fnv1a(e.pool_[m].id));
    if (config.monitor.kind == MonitorKind::gp) {
      GpTrainOptions gp = config.monitor.gp;
      gp.seed = seed;
      e.monitors_[m] = train_gp(e.datasets_[m], gp);
    } else {
      DropoutTrainOptions d = config.monitor.dropout;
      d.seed = seed;
      e.monitors_[m] = train_mcdropout(e.datasets_[m], d, config.monitor.mc_samples);
    }
  });
  for (std::size_t m = 0; m < e.pool_.size(); ++m) {
    e.predictors_.push_back(std::make_unique<MonitorPredictor>(e.monitors_[m], config.seed));
    e.monitor_set_[e.pool_[m].id] = e.predictors_.back().get();
  }
  return e;
}

void Experiment::attach_oracle() {
  std::map<std::string, std::vector<double>, std::less<>> actuals;
  for (const auto& t : tests_) actuals[t.series.id] = t.y;
  monitors_.clear();
  predictors_.clear();
  monitor_set_.clear();
  predictors_.push_back(std::make_unique<OracleMonitor>(std::move(actuals)));
  for (const auto& spec : pool_) monitor_set_[spec.id] = predictors_.front().get();
  oracle_ = true;
}

Experiment Experiment::with_oracle_monitors() const {
  Experiment e;
  e.config_ = config_;
  e.ingestion_ = ingestion_;
  e.pool_ = pool_;
  e.train_ = train_;
  e.tests_ = tests_;
  e.datasets_ = datasets_;
  e.failures_ = failures_;
  e.fingerprint_ = fingerprint_;
  e.attach_oracle();
  return e;
}

std::string Experiment::incumbent() const {
  if (config_.incumbent) return *config_.incumbent;
  std::size_t best = 0;
  for (std::size_t m = 1; m < datasets_.size(); ++m)
    if (datasets_[m].targets.mean() < datasets_[best].targets.mean()) best = m;
  return pool_[best].id;
}

// ---------------------------------------------------------------- commands

std::vector<ModelEvaluation> evaluate(const Experiment& e) {
  const auto& pool = e.pool();
  const auto& tests = e.test_series();
  const std::size_t h = e.config().horizon;
  std::vector<ModelEvaluation> out(pool.size());
  for (std::size_t m = 0; m < pool.size(); ++m) {
    out[m].model_id = pool[m].id;
    out[m].train_pairs = e.datasets()[m].size();
    out[m].test_series = tests.size();
    out[m].predicted.resize(tests.size());
    out[m].baseline.resize(tests.size());
    out[m].truth.resize(tests.size());
  }
  parallel_for(tests.size(), [&](std::size_t i) {
    const TestSeries& t = tests[i];
    const std::span<const double> observed(t.y.data(), t.origin);
    for (std::size_t m = 0; m < pool.size(); ++m) {
      PredictionQuery q{t.series.id, pool[m].id, observed, t.forecasts[m], h};
      out[m].predicted[i] = e.monitor_set().at(pool[m].id)->predict(q);
      out[m].truth[i] = t.truth[m];
      out[m].baseline[i] = t.baseline[m];
    }
  });
  for (auto& row : out) {
    row.monitor_rmse = evaluate_monitor(row.predicted, row.truth).value;
    std::vector<double> b, tr;
    for (std::size_t i = 0; i < row.truth.size(); ++i)
      if (!std::isnan(row.baseline[i])) {
        b.push_back(row.baseline[i]);
        tr.push_back(row.truth[i]);
      }
    row.baseline_rmse = b.empty() ? std::numeric_limits<double>::quiet_NaN() : rmse(b, tr).value;
  }
  return out;
}

RankingTables rank(const std::vector<ModelEvaluation>& evaluation) {
  if (evaluation.empty()) throw UsageError("rank: nothing to rank");
  const std::size_t n = evaluation.front().truth.size();
  std::vector<bool> baseline_ok(n, true);
  for (const auto& row : evaluation)
    for (std::size_t i = 0; i < n; ++i)
      if (std::isnan(row.baseline[i])) baseline_ok[i] = false;
  std::map<std::string, std::vector<double>> truth, predicted, baseline;
  for (const auto& row : evaluation) {
    truth[row.model_id] = row.truth;
    auto& p = predicted[row.model_id];
    for (const auto& v : row.predicted) p.push_back(v.mean);
    auto& b = baseline[row.model_id];
    for (std::size_t i = 0; i < n; ++i)
      if (baseline_ok[i]) b.push_back(row.baseline[i]);
  }
  RankingTables r{rank_models(truth), rank_models(predicted), {}};
  if (!baseline.begin()->second.empty()) r.baseline = rank_models(baseline);
  return r;
}

namespace {

std::vector<CurvePoint> curve_of(const std::string& strategy, const std::vector<SelectionTrace>& traces) {
  std::vector<CurvePoint> out;
  if (traces.empty()) return out;
  const std::size_t periods = traces.front().realized_smape_per_period.size();
  for (std::size_t p = 0; p < periods; ++p) {
    double sum = 0.0;
    for (const auto& t : traces) sum += t.realized_smape_per_period[p];
    const double n = static_cast<double>(traces.size());
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& t : traces) ss += (t.realized_smape_per_period[p] - mean) * (t.realized_smape_per_period[p] - mean);
    out.push_back({p + 1, strategy, mean, traces.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0});
  }
  return out;
}

double overall_of(const std::vector<SelectionTrace>& traces) {
  double sum = 0.0;
  for (const auto& t : traces) sum += t.realized_smape();
  return traces.empty() ? 0.0 : sum / static_cast<double>(traces.size());
}

}  // namespace

SimulationResult simulate(const Experiment& e) {
  const auto& pool = e.pool();
  const auto& tests = e.test_series();
  const std::size_t h = e.config().horizon, period = e.config().period;
  SimulationResult r;
  r.dynamic.resize(tests.size());
  for (const auto& spec : pool) r.fixed[spec.id].resize(tests.size());

  UnusedPredictor unused;
  parallel_for(tests.size(), [&](std::size_t i) {
    const TestSeries& t = tests[i];
    r.dynamic[i] = dynamic_select(t.series, t.fitted, e.monitor_set(), h, period);
    for (std::size_t m = 0; m < pool.size(); ++m) {
      MonitorSet single{{pool[m].id, &unused}};
      r.fixed.at(pool[m].id)[i] = run_checkpoints(
          t.series, std::span(&t.fitted[m], 1), single, h, period,
          [&](std::size_t, const std::map<std::string, PredictedError>&, const std::string&) { return pool[m].id; });
    }
  });

  auto add = [&](const std::string& strategy, const std::vector<SelectionTrace>& traces) {
    auto c = curve_of(strategy, traces);
    r.curve.insert(r.curve.end(), c.begin(), c.end());
    r.overall[strategy] = overall_of(traces);
  };
  add("dynamic", r.dynamic);
  for (const auto& [id, traces] : r.fixed) add("fixed:" + id, traces);
  return r;
}

SimulationResult run_sentinel_simulation(const Experiment& e) {
  SimulationResult r = simulate(e);
  std::vector<SentinelTask> tasks;
  const std::string incumbent = e.incumbent();
  for (const auto& t : e.test_series()) tasks.push_back({t.series, t.fitted, incumbent});
  auto runs = run_sentinel(tasks, e.monitor_set(), e.config().horizon, e.config().period, e.config().policy, &r.alerts);
  for (auto& run : runs) r.sentinel.push_back(std::move(run.trace));
  auto c = curve_of("sentinel", r.sentinel);
  r.curve.insert(r.curve.end(), c.begin(), c.end());
  r.overall["sentinel"] = overall_of(r.sentinel);
  return r;
}

// ---------------------------------------------------------------- reports

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_number(double v) { return std::isfinite(v) ? format_number(v) : ""; }

json report_header(const Experiment& e, std::string_view kind) {
  json failures = json::array();
  for (const auto& f : e.failures()) failures.push_back({{"series_id", f.series_id}, {"message", f.message}});
  return {{"kind", kind},
          {"fingerprint", e.fingerprint()},
          {"seed", e.config().seed},
          {"monitor", e.oracle() ? "oracle" : std::string(to_string(e.config().monitor.kind))},
          {"horizon", e.config().horizon},
          {"train_series", e.train_series().size()},
          {"test_series", e.test_series().size()},
          {"ingestion",
           {{"total", e.ingestion().total},
            {"kept", e.ingestion().kept},
            {"min_length", e.ingestion().min_length},
            {"dropped", e.ingestion().dropped}}},
          {"failures", failures}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw DataError("write failed: " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json ranking_json(const Ranking& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    json row = {{"position", i + 1}, {"model_id", r.entries[i].model_id}, {"mean", r.entries[i].mean_predicted_smape}};
    if (i + 1 < r.entries.size()) {
      row["significant_vs_next"] = static_cast<bool>(r.adjacent_significance[i]);
      row["p_value_vs_next"] = r.adjacent_p_values[i];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void ranking_csv(std::ostringstream& out, std::string_view table, const Ranking& r) {
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    out << table << ',' << i + 1 << ',' << r.entries[i].model_id << ',' << format_number(r.entries[i].mean_predicted_smape)
        << ',';
    if (i + 1 < r.entries.size())
      out << (r.adjacent_significance[i] ? "true" : "false") << ',' << format_number(r.adjacent_p_values[i]);
    else
      out << ',';
    out << '\n';
  }
}

void curve_reports(const Experiment& e, const SimulationResult& r, std::string_view kind,
                   const std::filesystem::path& csv, const std::filesystem::path& js) {
  std::ostringstream out;
  out << "period,strategy,mean,std\n";
  for (const auto& p : r.curve)
    out << p.period << ',' << p.strategy << ',' << format_number(p.mean) << ',' << format_number(p.std) << '\n';
  write_text(csv, out.str());

  json j = report_header(e, kind);
  j["period"] = e.config().period;
  json curve = json::array();
  for (const auto& p : r.curve)
    curve.push_back({{"period", p.period}, {"strategy", p.strategy}, {"mean", p.mean}, {"std", p.std}});
  j["rows"] = curve;
  j["overall"] = r.overall;
  // how often each model was chosen, per checkpoint
  json choices = json::array();
  const std::size_t checkpoints = r.dynamic.empty() ? 0 : r.dynamic.front().checkpoints.size();
  for (std::size_t c = 0; c < checkpoints; ++c) {
    std::map<std::string, std::size_t> counts;
    for (const auto& spec : e.pool()) counts[spec.id] = 0;
    for (const auto& t : r.dynamic) ++counts[t.checkpoints[c].chosen];
    choices.push_back(counts);
  }
  j["dynamic_choices"] = choices;
  if (!r.sentinel.empty()) {
    std::size_t alerts = 0;
    for (const auto& a : r.alerts) alerts += a.action == Action::alert_and_reselect;
    j["incumbent"] = e.incumbent();
    j["policy"] = {{"smape_threshold", e.config().policy.smape_threshold},
                   {"uncertainty_threshold", e.config().policy.uncertainty_threshold
                                                 ? json(*e.config().policy.uncertainty_threshold)
                                                 : json(nullptr)},
                   {"require_low_uncertainty", e.config().policy.require_low_uncertainty}};
    j["decisions"] = r.alerts.size();
    j["alerts"] = alerts;
  }
  write_json(js, j);
}

}  // namespace

void run_command(std::string_view command, const RunConfig& config, const HarnessOptions& options) {
  static const std::set<std::string_view> known{"generate", "evaluate", "rank", "simulate", "sentinel"};
  if (!known.contains(command)) throw UsageError("unknown command '" + std::string(command) + "'");
  config.validate();
  const std::filesystem::path out_dir = config.out;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  if (command == "generate") {
    if (config.data) throw UsageError("generate needs a synthetic data source, not a CSV file");
    save_csv(out_dir / "dataset.csv", generate_synthetic(config.synthetic_config()));
    return;
  }

  const Experiment e = Experiment::prepare(config, options);
  if (command == "evaluate") {
    const auto rows = evaluate(e);
    std::ostringstream csv;
    csv << "model_id,train_pairs,test_series,monitor_rmse,baseline_rmse\n";
    json j = report_header(e, "rmse_table");
    json list = json::array();
    for (std::size_t m = 0; m < rows.size(); ++m) {
      const auto& r = rows[m];
      csv << r.model_id << ',' << r.train_pairs << ',' << r.test_series << ',' << csv_number(r.monitor_rmse) << ','
          << csv_number(r.baseline_rmse) << '\n';
      json row = {{"model_id", r.model_id},
                  {"train_pairs", r.train_pairs},
                  {"test_series", r.test_series},
                  {"monitor_rmse", number_or_null(r.monitor_rmse)},
                  {"baseline_rmse", number_or_null(r.baseline_rmse)}};
      if (!e.monitors().empty()) {
        const auto& log = e.monitors()[m].train_log;
        row["train_log"] = {{"initial_objective", number_or_null(log.initial_objective)},
                            {"final_objective", number_or_null(log.final_objective)},
                            {"iterations", log.iterations}};
      }
      list.push_back(std::move(row));
    }
    j["rows"] = list;
    write_text(out_dir / "evaluate.csv", csv.str());
    write_json(out_dir / "evaluate.json", j);
    if (!e.monitors().empty()) {
      Registry registry;
      for (const auto& m : e.monitors()) registry.monitors[{m.monitored_model_id, m.horizon}] = m;
      registry.stamp();
      save_registry(registry, out_dir / "registry.json");
    }
  } else if (command == "rank") {
    const auto tables = rank(evaluate(e));
    std::ostringstream csv;
    csv << "table,position,model_id,mean,significant_vs_next,p_value_vs_next\n";
    ranking_csv(csv, "truth", tables.truth);
    ranking_csv(csv, "predicted", tables.predicted);
    ranking_csv(csv, "baseline", tables.baseline);
    json j = report_header(e, "ranking_table");
    j["truth"] = ranking_json(tables.truth);
    j["predicted"] = ranking_json(tables.predicted);
    j["baseline"] = ranking_json(tables.baseline);
    j["selected"] = tables.predicted.entries.front().model_id;
    write_text(out_dir / "rank.csv", csv.str());
    write_json(out_dir / "rank.json", j);
  } else if (command == "simulate") {
    curve_reports(e, simulate(e), "selection_curve", out_dir / "simulate.csv", out_dir / "simulate.json");
  } else {
    const auto r = run_sentinel_simulation(e);
    curve_reports(e, r, "sentinel_log", out_dir / "sentinel.csv", out_dir / "sentinel.json");
    std::ostringstream log;
    write_alert_log(log, r.alerts);
    write_text(out_dir / "alerts.ndjson", log.str());
  }
}

}  // namespace fmon
