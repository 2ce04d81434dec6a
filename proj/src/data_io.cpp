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

#include "fmon/data_io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "fmon/error.hpp"
#include "fmon/rng.hpp"
#include "json.hpp"

namespace fmon {

using nlohmann::json;

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) return fields;
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<TimeSeries> read_csv(std::istream& in, std::string_view source) {
  std::vector<TimeSeries> out;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (header) {
      header = false;
      continue;
    }
    if (row.empty()) continue;
    const auto fields = split_fields(row);
    const std::string id(trim(fields[0]));
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (id.empty()) throw DataError(where + ": empty series id");
    if (!seen.insert(id).second) throw DataError(where + ": duplicate series id '" + id + "'");

    TimeSeries ts;
    ts.id = id;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const std::string_view f = trim(fields[c]);
      if (f.empty() || f == "NA") {
        ts.values.emplace_back();
        continue;
      }
      double v = 0.0;
      const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || end != f.data() + f.size() || !std::isfinite(v))
        throw DataError(where + ": series '" + id + "', column " + std::to_string(c + 1) + ": cannot parse '" +
                        std::string(f) + "'");
      ts.values.emplace_back(v);
    }
    out.push_back(std::move(ts));
  }
  if (in.bad()) throw DataError(std::string(source) + ": read error");
  return out;
}

std::vector<TimeSeries> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in, path.string());
}

std::string format_number(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buf, end);
}

void write_csv(std::ostream& out, std::span<const TimeSeries> series) {
  std::size_t width = 0;
  for (const auto& s : series) width = std::max(width, s.size());
  out << "series_id";
  for (std::size_t i = 1; i <= width; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& s : series) {
    out << s.id;
    for (const auto& v : s.values) {
      out << ',';
      if (v) out << format_number(*v);
    }
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, std::span<const TimeSeries> series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, series);
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------- synthetic data

namespace {

void check_interval(const Interval& r, std::string_view name) {
  if (!(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi))
    throw UsageError(std::string(name) + " range must be finite with lo <= hi");
}

void check_probability(double p, std::string_view name) {
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_series == 0) throw UsageError("synthetic: n_series must be positive");
  check_interval(length, "length");
  check_interval(base_price, "base price");
  check_interval(slope, "slope");
  check_interval(amplitude, "amplitude");
  check_interval(drift.onset_fraction, "drift onset fraction");
  check_interval(drift.level_shift, "drift level shift");
  check_interval(drift.slope_change, "drift slope change");
  check_interval(missing.gap_length, "gap length");
  if (length.lo < 2 || length.lo != std::floor(length.lo) || length.hi != std::floor(length.hi))
    throw UsageError("synthetic: lengths must be integers >= 2");
  if (base_price.lo <= 0) throw UsageError("synthetic: base prices must be positive");
  if (amplitude.lo <= 0) throw UsageError("synthetic: seasonal amplitude must be positive");
  if (period == 0) throw UsageError("synthetic: seasonal period must be >= 1");
  if (!(noise >= 0.0 && std::isfinite(noise))) throw UsageError("synthetic: noise must be >= 0");
  check_probability(drift.probability, "drift probability");
  check_probability(missing.gap_probability, "gap probability");
  if (drift.onset_fraction.lo < 0 || drift.onset_fraction.hi > 1)
    throw UsageError("synthetic: onset fraction must lie in [0, 1]");
  if (drift.level_shift.lo <= 0) throw UsageError("synthetic: level shift multiplier must be positive");
  if (missing.gap_length.lo < 1 || missing.gap_length.lo != std::floor(missing.gap_length.lo) ||
      missing.gap_length.hi != std::floor(missing.gap_length.hi))
    throw UsageError("synthetic: gap lengths must be integers >= 1");
}

TimeSeries generate_series(const SyntheticConfig& c, std::size_t index, DriftRecord* record) {
  Rng rng(c.seed ^ static_cast<std::uint64_t>(index));
  const auto n = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(c.length.lo), static_cast<std::int64_t>(c.length.hi)));
  const double base = rng.uniform(c.base_price.lo, c.base_price.hi);
  const double slope = rng.uniform(c.slope.lo, c.slope.hi);
  const double amplitude = rng.uniform(c.amplitude.lo, c.amplitude.hi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const bool drifted = rng.bernoulli(c.drift.probability);
  const double onset_fraction = rng.uniform(c.drift.onset_fraction.lo, c.drift.onset_fraction.hi);
  const double shift = rng.uniform(c.drift.level_shift.lo, c.drift.level_shift.hi);
  const double slope_change = rng.uniform(c.drift.slope_change.lo, c.drift.slope_change.hi);

  const auto nn = static_cast<double>(n);
  const std::size_t onset = std::min(n - 1, static_cast<std::size_t>(std::floor(onset_fraction * nn)));
  if (record) *record = {drifted, drifted ? onset : 0};

  TimeSeries ts;
  char id[32];
  std::snprintf(id, sizeof id, "syn%05zu", index);
  ts.id = id;
  ts.values.reserve(n);
  const double m = static_cast<double>(c.period);
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    double trend = 1.0 + slope * tt / nn;
    double level = 1.0;
    if (drifted && t >= onset) {
      trend += slope_change * (tt - static_cast<double>(onset)) / nn;
      level = shift;
    }
    const double season =
        c.period > 1 ? std::pow(amplitude, std::sin(2.0 * std::numbers::pi * static_cast<double>(t % c.period) / m + phase))
                     : 1.0;
    const double eps = c.noise * rng.normal();
    ts.values.emplace_back(std::max(0.01 * base, base * trend * level * season * (1.0 + eps)));
  }
  for (std::size_t t = 1; t < n; ++t) {
    if (!rng.bernoulli(c.missing.gap_probability)) continue;
    const auto len = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(c.missing.gap_length.lo),
                                                          static_cast<std::int64_t>(c.missing.gap_length.hi)));
    for (std::size_t k = t; k < std::min(n, t + len); ++k) ts.values[k].reset();
  }
  return ts;
}

std::vector<TimeSeries> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::vector<TimeSeries> out;
  out.reserve(config.n_series);
  for (std::size_t i = 0; i < config.n_series; ++i) out.push_back(generate_series(config, i));
  return out;
}

// ---------------------------------------------------------------- registry

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("registry: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json smoothing_json(const SmoothingState& s) {
  return {{"alpha", s.alpha}, {"beta", s.beta}, {"phi", s.phi}, {"level", s.level}, {"trend", s.trend}};
}

SmoothingState smoothing_from(const json& j) {
  return {j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("phi").get<double>(),
          j.at("level").get<double>(), j.at("trend").get<double>()};
}

json forecaster_json(const FittedForecaster& f) {
  json spec = {{"id", f.spec.id}, {"kind", to_string(f.spec.kind)}, {"hyperparameters", f.spec.hyperparameters}};
  json smoothing = json::array();
  for (const auto& s : f.smoothing) smoothing.push_back(smoothing_json(s));
  json j = {{"spec", spec},
            {"train_len", f.train_len},
            {"observed_len", f.observed_len},
            {"seasonal_adjusted", f.seasonal_adjusted},
            {"seasonal_indices", f.seasonal_indices},
            {"smoothing", smoothing},
            {"history", f.history}};
  j["theta"] = f.theta ? json{{"intercept", f.theta->intercept},
                              {"slope", f.theta->slope},
                              {"line2", smoothing_json(f.theta->line2)}}
                       : json(nullptr);
  if (f.forest) {
    json trees = json::array();
    for (const auto& tree : f.forest->trees) {
      json nodes = json::array();
      for (const auto& n : tree.nodes) nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value}));
      trees.push_back(std::move(nodes));
    }
    j["forest"] = std::move(trees);
  } else {
    j["forest"] = nullptr;
  }
  return j;
}

FittedForecaster forecaster_from(const json& j) {
  FittedForecaster f;
  const json& spec = j.at("spec");
  f.spec.id = spec.at("id").get<std::string>();
  try {
    f.spec.kind = forecaster_kind_from_string(spec.at("kind").get<std::string>());
    f.spec.hyperparameters = spec.at("hyperparameters").get<std::map<std::string, double>>();
    f.spec.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("registry: invalid forecaster spec: ") + e.what());
  }
  f.train_len = j.at("train_len").get<std::size_t>();
  f.observed_len = j.at("observed_len").get<std::size_t>();
  f.seasonal_adjusted = j.at("seasonal_adjusted").get<bool>();
  f.seasonal_indices = j.at("seasonal_indices").get<std::vector<double>>();
  for (const auto& s : j.at("smoothing")) f.smoothing.push_back(smoothing_from(s));
  f.history = j.at("history").get<std::vector<double>>();
  if (!j.at("theta").is_null())
    f.theta = ThetaState{j["theta"].at("intercept").get<double>(), j["theta"].at("slope").get<double>(),
                         smoothing_from(j["theta"].at("line2"))};
  if (!j.at("forest").is_null()) {
    RegressionForest forest;
    for (const auto& t : j["forest"]) {
      RegressionTree tree;
      for (const auto& n : t) {
        TreeNode node{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                      n.at(4).get<double>()};
        const int count = static_cast<int>(t.size());
        if (node.feature >= 0 && (node.left < 0 || node.left >= count || node.right < 0 || node.right >= count))
          throw DataError("registry: forest node points outside its tree");
        tree.nodes.push_back(node);
      }
      forest.trees.push_back(std::move(tree));
    }
    f.forest = std::move(forest);
  }
  if (f.observed_len < f.train_len || f.seasonal_indices.empty())
    throw DataError("registry: inconsistent forecaster '" + f.spec.id + "'");
  return f;
}

json monitor_json(const MonitorModel& m) {
  json j = {{"model_id", m.monitored_model_id},
            {"horizon", m.horizon},
            {"feature_length", m.feature_length},
            {"kind", to_string(m.kind())},
            {"train_log",
             {{"initial_objective", m.train_log.initial_objective},
              {"final_objective", m.train_log.final_objective},
              {"iterations", m.train_log.iterations}}}};
  if (const auto* gp = std::get_if<GaussianProcess<double>>(&m.model)) {
    const auto& p = gp->hyperparameters();
    j["gp"] = {{"signal_variance", p.signal_variance},
               {"lengthscales", vector_json(p.lengthscales)},
               {"noise_variance", p.noise_variance},
               {"inputs", matrix_json(gp->inputs())},
               {"targets", vector_json(gp->targets())}};
  } else {
    const auto& d = std::get<DropoutMonitor>(m.model);
    j["mcdropout"] = {{"mc_samples", d.mc_samples},
                      {"dropout_rate", d.net.dropout_rate},
                      {"w1", matrix_json(d.net.w1)},
                      {"w2", matrix_json(d.net.w2)},
                      {"w3", matrix_json(d.net.w3)},
                      {"b1", vector_json(d.net.b1)},
                      {"b2", vector_json(d.net.b2)},
                      {"b3", vector_json(d.net.b3)}};
  }
  return j;
}

MonitorModel monitor_from(const json& j) {
  MonitorModel m;
  m.monitored_model_id = j.at("model_id").get<std::string>();
  m.horizon = j.at("horizon").get<std::size_t>();
  m.feature_length = j.at("feature_length").get<std::size_t>();
  const json& log = j.at("train_log");
  m.train_log = {log.at("initial_objective").get<double>(), log.at("final_objective").get<double>(),
                 log.at("iterations").get<std::size_t>()};
  const auto cols = static_cast<Eigen::Index>(m.feature_length);
  if (m.horizon == 0 || m.feature_length < m.horizon) throw DataError("registry: invalid monitor dimensions");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gp") {
    const json& g = j.at("gp");
    ArdHyperparameters<double> p;
    p.signal_variance = g.at("signal_variance").get<double>();
    p.lengthscales = vector_from(g.at("lengthscales"));
    p.noise_variance = g.at("noise_variance").get<double>();
    Eigen::MatrixXd x = matrix_from(g.at("inputs"), cols);
    Eigen::VectorXd y = vector_from(g.at("targets"));
    if (p.lengthscales.size() != cols || y.size() != x.rows() || x.rows() == 0 || !(p.signal_variance > 0) ||
        !(p.noise_variance > 0) || (p.lengthscales.array() <= 0).any())
      throw DataError("registry: inconsistent GP monitor for '" + m.monitored_model_id + "'");
    m.model = GaussianProcess<double>::condition(std::move(x), std::move(y), std::move(p));
  } else if (kind == "mcdropout") {
    const json& d = j.at("mcdropout");
    DropoutMonitor dm;
    dm.mc_samples = d.at("mc_samples").get<std::size_t>();
    dm.net.dropout_rate = d.at("dropout_rate").get<double>();
    const auto hidden = static_cast<Eigen::Index>(d.at("b1").size());
    dm.net.w1 = matrix_from(d.at("w1"), cols);
    dm.net.w2 = matrix_from(d.at("w2"), hidden);
    dm.net.w3 = matrix_from(d.at("w3"), hidden);
    dm.net.b1 = vector_from(d.at("b1"));
    dm.net.b2 = vector_from(d.at("b2"));
    dm.net.b3 = vector_from(d.at("b3"));
    if (dm.net.w1.rows() != hidden || dm.net.w2.rows() != hidden || dm.net.b2.size() != hidden ||
        dm.net.w3.rows() != 1 || dm.net.b3.size() != 1 || dm.mc_samples == 0 ||
        !(dm.net.dropout_rate >= 0 && dm.net.dropout_rate < 1))
      throw DataError("registry: inconsistent MC-dropout monitor for '" + m.monitored_model_id + "'");
    m.model = std::move(dm);
  } else {
    throw DataError("registry: unknown monitor kind '" + kind + "'");
  }
  return m;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw DataError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw DataError("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

void Registry::stamp() {
  updated = utc_now();
  if (created.empty()) created = updated;
}

std::string registry_to_string(const Registry& r) {
  json monitors = json::array();
  for (const auto& [key, m] : r.monitors) {
    if (key.first != m.monitored_model_id || key.second != m.horizon)
      throw UsageError("registry: monitor key does not match its model");
    monitors.push_back(monitor_json(m));
  }
  json forecasters = json::array();
  for (const auto& [key, f] : r.forecasters) {
    if (key.second != f.id()) throw UsageError("registry: forecaster key does not match its model");
    forecasters.push_back({{"series_id", key.first}, {"model", forecaster_json(f)}});
  }
  json doc = {{"version", r.version},
              {"created", r.created},
              {"updated", r.updated},
              {"monitors", std::move(monitors)},
              {"forecasters", std::move(forecasters)}};
  return doc.dump(1) + "\n";
}

Registry registry_from_string(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("registry: malformed JSON: ") + e.what());
  }
  try {
    Registry r;
    r.version = doc.at("version").get<std::string>();
    if (r.version != kRegistryVersion)
      throw DataError("registry: version '" + r.version + "' does not match expected '" +
                      std::string(kRegistryVersion) + "'");
    r.created = doc.at("created").get<std::string>();
    r.updated = doc.at("updated").get<std::string>();
    for (const auto& m : doc.at("monitors")) {
      MonitorModel model = monitor_from(m);
      auto key = std::make_pair(model.monitored_model_id, model.horizon);
      if (!r.monitors.emplace(std::move(key), std::move(model)).second)
        throw DataError("registry: duplicate monitor entry");
    }
    for (const auto& f : doc.at("forecasters")) {
      FittedForecaster model = forecaster_from(f.at("model"));
      auto key = std::make_pair(f.at("series_id").get<std::string>(), model.id());
      if (!r.forecasters.emplace(std::move(key), std::move(model)).second)
        throw DataError("registry: duplicate forecaster entry");
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("registry: invalid document: ") + e.what());
  }
}

void save_registry(const Registry& registry, const std::filesystem::path& path) {
  const std::string text = registry_to_string(registry);
  FileLock lock(path.string() + ".lock");
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot replace " + path.string() + ": " + ec.message());
}

Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return registry_from_string(buf.str());
}

// ---------------------------------------------------------------- alert log

void write_alert_log(std::ostream& out, std::span<const Alert> alerts) {
  for (const auto& a : alerts) {
    json j = {{"series_id", a.series_id},
              {"model_id", a.model_id},
              {"checkpoint", a.checkpoint},
              {"predicted_mean", a.predicted.mean},
              {"predicted_std", a.predicted.std ? json(*a.predicted.std) : json(nullptr)},
              {"smape_threshold", a.policy.smape_threshold},
              {"uncertainty_threshold",
               a.policy.uncertainty_threshold ? json(*a.policy.uncertainty_threshold) : json(nullptr)},
              {"require_low_uncertainty", a.policy.require_low_uncertainty},
              {"action", to_string(a.action)}};
    out << j.dump() << '\n';
  }
}

std::vector<Alert> read_alert_log(std::istream& in) {
  std::vector<Alert> alerts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Alert a;
      a.series_id = j.at("series_id").get<std::string>();
      a.model_id = j.at("model_id").get<std::string>();
      a.checkpoint = j.at("checkpoint").get<std::size_t>();
      a.predicted.mean = j.at("predicted_mean").get<double>();
      if (!j.at("predicted_std").is_null()) a.predicted.std = j["predicted_std"].get<double>();
      a.policy.smape_threshold = j.at("smape_threshold").get<double>();
      a.policy.uncertainty_threshold.reset();
      if (!j.at("uncertainty_threshold").is_null())
        a.policy.uncertainty_threshold = j["uncertainty_threshold"].get<double>();
      a.policy.require_low_uncertainty = j.at("require_low_uncertainty").get<bool>();
      a.action = action_from_string(j.at("action").get<std::string>());
      alerts.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw DataError("alert log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const UsageError& e) {
      throw DataError("alert log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return alerts;
}

}  // namespace fmon
