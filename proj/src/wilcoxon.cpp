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

#include "fmon/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fmon/error.hpp"

namespace fmon {

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_limit) {
  if (a.size() != b.size())
    throw UsageError("wilcoxon: sample sizes differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");

  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();

  WilcoxonResult result;
  result.reduced_n = n;
  if (n == 0) return result;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });

  // Doubled ranks stay integral under averaging: a tie group spanning
  // 1-based ranks i..j gets 2 * (i + j) / 2 = i + j.
  std::vector<std::size_t> doubled(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) doubled[order[k]] = (i + 1) + (j + 1);
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  std::size_t plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += doubled[i];
    if (d[i] > 0) plus2 += doubled[i];
  }
  const std::size_t w2 = std::min(plus2, total2 - plus2);
  result.statistic = static_cast<double>(w2) / 2.0;

  if (n <= exact_limit) {
    // counts[s] = number of sign assignments whose doubled W+ equals s
    std::vector<double> counts(total2 + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (counts[s] != 0.0) counts[s + r] += counts[s];
      reach += r;
    }
    double tail = 0.0;
    for (std::size_t s = 0; s <= w2; ++s) tail += counts[s];
    result.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    result.exact = true;
    return result;
  }

  const auto nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  result.exact = false;
  if (var <= 0.0) return result;
  const double z = (result.statistic - mean + 0.5) / std::sqrt(var);
  result.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  return result;
}

}  // namespace fmon
