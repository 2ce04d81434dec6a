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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fmon/monitor.hpp"
#include "fmon/forecasters.hpp"
#include "fmon/sentinel.hpp"
#include "fmon/series.hpp"

namespace fmon {

// ---------------------------------------------------------------- CSV

/// Row-per-series CSV: a header line, then `id,v1,v2,...` per series.
/// Rows may be ragged; empty fields and `NA` are missing values.
std::vector<TimeSeries> read_csv(std::istream& in, std::string_view source = "<stream>");
std::vector<TimeSeries> load_csv(const std::filesystem::path& path);

/// Canonical writer: shortest round-trip decimals, missing as empty field.
void write_csv(std::ostream& out, std::span<const TimeSeries> series);
void save_csv(const std::filesystem::path& path, std::span<const TimeSeries> series);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

// ---------------------------------------------------------------- synthetic data

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

struct DriftConfig {
  double probability = 0.5;
  Interval onset_fraction{0.93, 0.98};
  Interval level_shift{0.6, 1.6};  // multiplier applied from the onset
  Interval slope_change{-1.0, 1.0};  // extra relative growth over the full length

  friend bool operator==(const DriftConfig&, const DriftConfig&) = default;
};

struct MissingConfig {
  double gap_probability = 0.0;  // per step, chance that a gap starts there
  Interval gap_length{1, 3};

  friend bool operator==(const MissingConfig&, const MissingConfig&) = default;
};

/// Price-like series: base * (1 + slope * t / T) * s(t mod m) * (1 + eps),
/// with s(k) = a^sin(2 pi k / m + phase), so amplitude 1 is flat.
struct SyntheticConfig {
  std::size_t n_series = 500;
  Interval length{120, 400};
  Interval base_price{50, 500};
  Interval slope{-0.3, 0.3};
  std::size_t period = 7;
  Interval amplitude{1.0, 1.3};
  double noise = 0.02;
  DriftConfig drift;
  MissingConfig missing;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

/// Series i is drawn from its own stream seeded with seed ^ i, so adding
/// series leaves earlier ones unchanged.
std::vector<TimeSeries> generate_synthetic(const SyntheticConfig& config);

/// Where drift starts in a generated series (absent when none was drawn).
struct DriftRecord {
  bool drifted = false;
  std::size_t onset = 0;
};

TimeSeries generate_series(const SyntheticConfig& config, std::size_t index, DriftRecord* drift = nullptr);

// ---------------------------------------------------------------- registry

inline constexpr std::string_view kRegistryVersion = "1.0";

struct Registry {
  std::string version{kRegistryVersion};
  std::map<std::pair<std::string, std::size_t>, MonitorModel> monitors;           // (model id, h)
  std::map<std::pair<std::string, std::string>, FittedForecaster> forecasters;    // (series id, model id)
  std::string created;
  std::string updated;

  /// Sets `updated` to now (UTC, ISO 8601) and `created` if still empty.
  void stamp();

  friend bool operator==(const Registry&, const Registry&) = default;
};

std::string registry_to_string(const Registry& registry);
Registry registry_from_string(std::string_view text);

/// Writes atomically under an advisory lock on `<path>.lock`.
void save_registry(const Registry& registry, const std::filesystem::path& path);
Registry load_registry(const std::filesystem::path& path);

// ---------------------------------------------------------------- alert log

/// One JSON object per line, in the given order.
void write_alert_log(std::ostream& out, std::span<const Alert> alerts);
std::vector<Alert> read_alert_log(std::istream& in);

}  // namespace fmon
