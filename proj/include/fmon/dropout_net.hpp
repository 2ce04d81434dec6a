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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fmon/error.hpp"
#include "fmon/gaussian_process.hpp"  // Matrix / Vector aliases
#include "fmon/rng.hpp"

namespace fmon {

struct DropoutTrainOptions {
  std::size_t hidden = 64;
  double dropout_rate = 0.5;
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
};

/// Two hidden ReLU layers with inverted dropout after each and a scalar
/// linear output. Dropout stays active at prediction time, so repeated
/// forward passes sample an approximate predictive distribution.
template <typename Scalar>
struct DropoutNet {
  Matrix<Scalar> w1, w2, w3;  // hidden x L, hidden x hidden, 1 x hidden
  Vector<Scalar> b1, b2, b3;
  Scalar dropout_rate{0.5};

  Eigen::Index input_size() const { return w1.cols(); }

  static DropoutNet initialize(Eigen::Index inputs, Eigen::Index hidden, Scalar rate, Rng& rng) {
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      Matrix<Scalar> w(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
      return w;
    };
    DropoutNet net;
    net.dropout_rate = rate;
    net.w1 = glorot(hidden, inputs);
    net.w2 = glorot(hidden, hidden);
    net.w3 = glorot(1, hidden);
    net.b1 = Vector<Scalar>::Zero(hidden);
    net.b2 = Vector<Scalar>::Zero(hidden);
    net.b3 = Vector<Scalar>::Zero(1);
    return net;
  }

  // Inverted-dropout mask: kept units are scaled by 1 / (1 - rate).
  Matrix<Scalar> mask(Eigen::Index rows, Eigen::Index cols, Rng& rng) const {
    if (dropout_rate <= 0) return Matrix<Scalar>::Ones(rows, cols);
    const Scalar keep_scale = Scalar(1) / (Scalar(1) - dropout_rate);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        m(i, j) = rng.uniform() >= static_cast<double>(dropout_rate) ? keep_scale : Scalar(0);
    return m;
  }

  // One stochastic pass over a batch stored column-wise (L x B).
  template <typename Derived>
  Vector<Scalar> sample(const Eigen::MatrixBase<Derived>& x, Rng& rng) const {
    const Eigen::Index batch = x.cols();
    Matrix<Scalar> h1 = ((w1 * x).colwise() + b1).cwiseMax(Scalar(0));
    h1 = h1.cwiseProduct(mask(h1.rows(), batch, rng));
    Matrix<Scalar> h2 = ((w2 * h1).colwise() + b2).cwiseMax(Scalar(0));
    h2 = h2.cwiseProduct(mask(h2.rows(), batch, rng));
    return ((w3 * h2).colwise() + b3).transpose();
  }

  friend bool operator==(const DropoutNet& a, const DropoutNet& b) {
    return a.dropout_rate == b.dropout_rate && same_values(a.w1, b.w1) && same_values(a.w2, b.w2) &&
           same_values(a.w3, b.w3) && same_values(a.b1, b.b1) && same_values(a.b2, b.b2) &&
           same_values(a.b3, b.b3);
  }
};

template <typename Scalar>
struct DropoutTrainResult {
  DropoutNet<Scalar> net;
  Scalar initial_loss{0};  // mean squared error over the first epoch
  Scalar final_loss{0};    // ... and over the last epoch
  std::size_t epochs = 0;
};

/// Mini-batch Adam on squared error. Rows of x are samples. Deterministic
/// for a given seed: initialization, shuffling and masks all draw from one
/// generator.
template <typename DerivedX, typename DerivedY>
auto train_dropout_net(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                       const DropoutTrainOptions& options) {
  using Scalar = typename DerivedX::Scalar;
  const Eigen::Index n = x.rows();
  if (n < 2) throw UsageError("dropout net training needs at least 2 samples");
  if (y.size() != n) throw UsageError("dropout net training: input and target counts differ");
  if (!(options.dropout_rate >= 0.0 && options.dropout_rate < 1.0))
    throw UsageError("dropout rate must lie in [0, 1)");
  if (options.epochs == 0 || options.batch_size == 0)
    throw UsageError("dropout net training needs epochs >= 1 and batch size >= 1");

  Rng rng(options.seed);
  DropoutTrainResult<Scalar> result;
  DropoutNet<Scalar>& net = result.net;
  net = DropoutNet<Scalar>::initialize(x.cols(), static_cast<Eigen::Index>(options.hidden),
                                       static_cast<Scalar>(options.dropout_rate), rng);

  struct Moments {
    Matrix<Scalar> m, v;
  };
  auto zeros_like = [](const auto& p) {
    return Moments{Matrix<Scalar>::Zero(p.rows(), p.cols()), Matrix<Scalar>::Zero(p.rows(), p.cols())};
  };
  Moments mw1 = zeros_like(net.w1), mw2 = zeros_like(net.w2), mw3 = zeros_like(net.w3);
  Moments mb1 = zeros_like(net.b1), mb2 = zeros_like(net.b2), mb3 = zeros_like(net.b3);
  constexpr Scalar beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  const auto lr = static_cast<Scalar>(options.learning_rate);

  auto adam = [&](auto& param, Moments& mom, const auto& grad) {
    mom.m = beta1 * mom.m + (1 - beta1) * grad;
    mom.v = beta2 * mom.v + (1 - beta2) * grad.cwiseAbs2();
    const Scalar c1 = 1 - std::pow(beta1, static_cast<Scalar>(step));
    const Scalar c2 = 1 - std::pow(beta2, static_cast<Scalar>(step));
    param -= (lr * (mom.m / c1).array() / ((mom.v / c2).array().sqrt() + eps)).matrix();
  };

  const Matrix<Scalar> xt = x.template cast<Scalar>().transpose();  // L x N
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch_size = std::min<Eigen::Index>(static_cast<Eigen::Index>(options.batch_size), n);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);

    Scalar epoch_loss = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index b = std::min(batch_size, n - start);
      Matrix<Scalar> xb(xt.rows(), b);
      Vector<Scalar> yb(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const Eigen::Index row = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = xt.col(row);
        yb[j] = static_cast<Scalar>(y[row]);
      }

      const Matrix<Scalar> z1 = (net.w1 * xb).colwise() + net.b1;
      const Matrix<Scalar> m1 = net.mask(z1.rows(), b, rng);
      const Matrix<Scalar> h1 = z1.cwiseMax(Scalar(0)).cwiseProduct(m1);
      const Matrix<Scalar> z2 = (net.w2 * h1).colwise() + net.b2;
      const Matrix<Scalar> m2 = net.mask(z2.rows(), b, rng);
      const Matrix<Scalar> h2 = z2.cwiseMax(Scalar(0)).cwiseProduct(m2);
      const Matrix<Scalar> out = (net.w3 * h2).colwise() + net.b3;  // 1 x b

      const Matrix<Scalar> residual = out - yb.transpose();
      const Scalar loss = residual.squaredNorm() / static_cast<Scalar>(b);
      if (!std::isfinite(loss)) throw NumericError("dropout net loss is not finite");
      epoch_loss += loss * static_cast<Scalar>(b);

      const Matrix<Scalar> d_out = (Scalar(2) / static_cast<Scalar>(b)) * residual;
      const Matrix<Scalar> d_w3 = d_out * h2.transpose();
      const Vector<Scalar> d_b3 = d_out.rowwise().sum();
      const Matrix<Scalar> d_z2 = (net.w3.transpose() * d_out)
                                      .cwiseProduct(m2)
                                      .cwiseProduct((z2.array() > 0).template cast<Scalar>().matrix());
      const Matrix<Scalar> d_w2 = d_z2 * h1.transpose();
      const Vector<Scalar> d_b2 = d_z2.rowwise().sum();
      const Matrix<Scalar> d_z1 = (net.w2.transpose() * d_z2)
                                      .cwiseProduct(m1)
                                      .cwiseProduct((z1.array() > 0).template cast<Scalar>().matrix());
      const Matrix<Scalar> d_w1 = d_z1 * xb.transpose();
      const Vector<Scalar> d_b1 = d_z1.rowwise().sum();

      ++step;
      adam(net.w1, mw1, d_w1);
      adam(net.b1, mb1, d_b1);
      adam(net.w2, mw2, d_w2);
      adam(net.b2, mb2, d_b2);
      adam(net.w3, mw3, d_w3);
      adam(net.b3, mb3, d_b3);
    }
    epoch_loss /= static_cast<Scalar>(n);
    if (epoch == 0) result.initial_loss = epoch_loss;
    result.final_loss = epoch_loss;
  }
  result.epochs = options.epochs;
  return result;
}

template <typename Scalar>
struct McSummary {
  Scalar mean{0};
  std::optional<Scalar> std;
};

/// Monte Carlo prediction for one input. Without dropout the net is
/// deterministic: a single pass is made and no spread is reported.
template <typename Scalar, typename Derived>
McSummary<Scalar> mc_predict(const DropoutNet<Scalar>& net, const Eigen::MatrixBase<Derived>& input,
                             std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw UsageError("mc_predict: need at least one sample");
  Rng rng(seed);
  const Vector<Scalar> x = input.template cast<Scalar>();
  McSummary<Scalar> out;
  if (net.dropout_rate <= 0) {
    out.mean = net.sample(x, rng)[0];
    return out;
  }
  const Matrix<Scalar> batch = x.replicate(1, static_cast<Eigen::Index>(samples));
  const Vector<Scalar> draws = net.sample(batch, rng);
  out.mean = draws.mean();
  out.std = samples > 1 ? std::sqrt((draws.array() - out.mean).square().sum() /
                                    static_cast<Scalar>(samples - 1))
                        : Scalar(0);
  return out;
}

}  // namespace fmon
