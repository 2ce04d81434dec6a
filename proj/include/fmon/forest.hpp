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
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fmon {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf prediction (mean of the leaf's targets)

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Variance-reduction regression tree stored as a flat node array; node 0
/// is the root. Samples with x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct ForestOptions {
  std::size_t trees = 100;
  std::size_t min_leaf = 5;
  std::size_t max_features = 0;  // 0 = consider every feature at each split
  std::uint64_t seed = 0;
};

/// Bagged regression trees. Tree i draws its bootstrap sample from a
/// generator seeded by (seed, i), so a forest is reproducible from its
/// options and training data alone.
struct RegressionForest {
  std::vector<RegressionTree> trees;

  static RegressionForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const ForestOptions& options);

  double predict(std::span<const double> x) const;

  friend bool operator==(const RegressionForest&, const RegressionForest&) = default;
};

}  // namespace fmon
