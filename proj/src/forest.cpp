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

#include "fmon/forest.hpp"

#include <algorithm>
#include <numeric>

#include "fmon/error.hpp"
#include "fmon/rng.hpp"

namespace fmon {
namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestOptions& options,
              Rng& rng)
      : x_(x), y_(y), options_(options), rng_(rng), features_(x.cols()) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<int> samples) {
    RegressionTree tree;
    grow(tree, samples, 0, samples.size());
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  double mean_of(const std::vector<int>& samples, std::size_t begin, std::size_t end) const {
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += y_[samples[i]];
    return sum / static_cast<double>(end - begin);
  }

  // Returns the node index. samples[begin, end) are reordered in place.
  int grow(RegressionTree& tree, std::vector<int>& samples, std::size_t begin, std::size_t end) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[index].value = mean_of(samples, begin, end);

    const std::size_t n = end - begin;
    if (n < 2 * options_.min_leaf) return index;

    const Split split = best_split(samples, begin, end);
    if (split.feature < 0) return index;

    auto mid_it = std::partition(samples.begin() + begin, samples.begin() + end, [&](int s) {
      return x_(s, split.feature) <= split.threshold;
    });
    const auto mid = static_cast<std::size_t>(mid_it - samples.begin());

    tree.nodes[index].feature = split.feature;
    tree.nodes[index].threshold = split.threshold;
    const int left = grow(tree, samples, begin, mid);
    const int right = grow(tree, samples, mid, end);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
    return index;
  }

  Split best_split(const std::vector<int>& samples, std::size_t begin, std::size_t end) {
    const std::size_t n = end - begin;
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) total += y_[samples[i]];
    const double base = total * total / static_cast<double>(n);

    std::size_t n_features = features_.size();
    if (options_.max_features > 0 && options_.max_features < n_features) {
      // partial Fisher-Yates: the first max_features slots are the draw
      for (std::size_t i = 0; i < options_.max_features; ++i) {
        const auto j = i + static_cast<std::size_t>(rng_.below(features_.size() - i));
        std::swap(features_[i], features_[j]);
      }
      n_features = options_.max_features;
    }

    Split best;
    std::vector<std::pair<double, int>> order(n);
    for (std::size_t f = 0; f < n_features; ++f) {
      const int feature = features_[f];
      for (std::size_t i = 0; i < n; ++i) order[i] = {x_(samples[begin + i], feature), samples[begin + i]};
      std::sort(order.begin(), order.end());
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += y_[order[i].second];
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < options_.min_leaf) continue;
        if (n_right < options_.min_leaf) break;
        const double here = order[i].first;
        const double next = order[i + 1].first;
        if (here == next) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right) - base;
        if (score > best.score + 1e-12 * std::abs(base)) {
          best = {feature, 0.5 * (here + next), score};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const ForestOptions& options_;
  Rng& rng_;
  std::vector<int> features_;
};

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    const auto& n = nodes[node];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[node].value;
}

RegressionForest RegressionForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const ForestOptions& options) {
  if (x.rows() != y.size() || x.rows() == 0)
    throw UsageError("RegressionForest::fit: need matching, non-empty samples");
  if (options.trees == 0) throw UsageError("RegressionForest::fit: tree count must be >= 1");
  if (options.min_leaf == 0) throw UsageError("RegressionForest::fit: min leaf must be >= 1");

  const auto n = static_cast<std::size_t>(x.rows());
  RegressionForest forest;
  forest.trees.reserve(options.trees);
  for (std::size_t t = 0; t < options.trees; ++t) {
    Rng rng(mix_seed(options.seed ^ mix_seed(t)));
    std::vector<int> samples(n);
    for (auto& s : samples) s = static_cast<int>(rng.below(n));
    TreeBuilder builder(x, y, options, rng);
    forest.trees.push_back(builder.build(std::move(samples)));
  }
  return forest;
}

double RegressionForest::predict(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& tree : trees) sum += tree.predict(x);
  return sum / static_cast<double>(trees.size());
}

}  // namespace fmon
