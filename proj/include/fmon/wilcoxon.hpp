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
#include <span>

namespace fmon {

struct WilcoxonResult {
  double statistic = 0.0;  // W = min(W+, W-)
  double p_value = 1.0;    // two-sided
  std::size_t reduced_n = 0;
  bool exact = true;
};

// Largest reduced sample size for which the exact null distribution is used.
inline constexpr std::size_t kWilcoxonExactLimit = 20;

/// Paired Wilcoxon signed-rank test on d = a - b. Zero differences are
/// dropped, tied |d| receive average ranks. The exact null distribution of
/// W+ over all 2^n sign assignments is used for n <= exact_limit,
/// otherwise the normal approximation with tie-corrected variance and a
/// 0.5 continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_limit = kWilcoxonExactLimit);

}  // namespace fmon
