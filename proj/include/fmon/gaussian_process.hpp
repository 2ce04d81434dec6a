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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "fmon/error.hpp"
#include "fmon/rng.hpp"

namespace fmon {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Eigen's operator== requires equal shapes.
template <typename A, typename B>
bool same_values(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// Hyperparameters of k(x, x') = s2 * exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2)
/// plus i.i.d. Gaussian noise of variance n2.
template <typename Scalar>
struct ArdHyperparameters {
  Scalar signal_variance{1};
  Vector<Scalar> lengthscales;
  Scalar noise_variance{1};

  Eigen::Index dimension() const { return lengthscales.size(); }

  // Packed as [log s2, log l_1 .. log l_L, log n2].
  Vector<Scalar> to_log() const {
    Vector<Scalar> theta(lengthscales.size() + 2);
    theta[0] = std::log(signal_variance);
    theta.segment(1, lengthscales.size()) = lengthscales.array().log().matrix();
    theta[theta.size() - 1] = std::log(noise_variance);
    return theta;
  }

  static ArdHyperparameters from_log(const Vector<Scalar>& theta) {
    ArdHyperparameters p;
    p.signal_variance = std::exp(theta[0]);
    p.lengthscales = theta.segment(1, theta.size() - 2).array().exp().matrix();
    p.noise_variance = std::exp(theta[theta.size() - 1]);
    return p;
  }

  std::string describe() const {
    std::ostringstream out;
    out.precision(17);
    out << "signal_variance=" << signal_variance << " noise_variance=" << noise_variance
        << " lengthscales=[";
    for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
      out << (d ? "," : "") << lengthscales[d];
    out << "]";
    return out.str();
  }

  friend bool operator==(const ArdHyperparameters& a, const ArdHyperparameters& b) {
    return a.signal_variance == b.signal_variance && a.noise_variance == b.noise_variance &&
           same_values(a.lengthscales, b.lengthscales);
  }
};

/// Squared distances between the rows of a and b after dividing every
/// column by its lengthscale.
template <typename DerivedA, typename DerivedB, typename Scalar>
Matrix<Scalar> scaled_sq_distances(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b,
                                   const Vector<Scalar>& lengthscales) {
  const auto inv = lengthscales.cwiseInverse().asDiagonal();
  const Matrix<Scalar> sa = a * inv;
  const Matrix<Scalar> sb = b * inv;
  Matrix<Scalar> d = (-2 * sa * sb.transpose()).eval();
  d.colwise() += sa.rowwise().squaredNorm();
  d.rowwise() += sb.rowwise().squaredNorm().transpose();
  return d.cwiseMax(Scalar(0));
}

/// Noise-free ARD kernel matrix between the rows of a and b.
template <typename DerivedA, typename DerivedB, typename Scalar>
Matrix<Scalar> ard_kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                          const ArdHyperparameters<Scalar>& p) {
  return (p.signal_variance * (Scalar(-0.5) * scaled_sq_distances(a, b, p.lengthscales).array()).exp())
      .matrix();
}

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

/// Cholesky of k with diagonal jitter escalated by decades from 1e-10 to
/// 1e-4 until the factorization succeeds. `jitter` is what was added.
template <typename Scalar>
struct JitteredCholesky {
  Eigen::LLT<Matrix<Scalar>> llt;
  Scalar jitter{0};
};

template <typename Scalar>
JitteredCholesky<Scalar> jittered_cholesky(const Matrix<Scalar>& k) {
  JitteredCholesky<Scalar> out;
  out.llt.compute(k);
  if (out.llt.info() == Eigen::Success) return out;
  for (Scalar jitter = Scalar(kJitterStart); jitter <= Scalar(kJitterMax) * 1.0001; jitter *= 10) {
    Matrix<Scalar> kj = k;
    kj.diagonal().array() += jitter;
    out.llt.compute(kj);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
  }
  throw NumericError("Cholesky factorization failed even with jitter " + std::to_string(kJitterMax));
}

template <typename Scalar>
struct MarginalLikelihood {
  Scalar value{0};
  Vector<Scalar> gradient;  // with respect to ArdHyperparameters::to_log()
};

/// Exact log marginal likelihood
///   -1/2 y^T K^-1 y - 1/2 log|K| - N/2 log 2pi,  K = K_ard + n2 I
/// and its gradient in log-parameter space.
template <typename DerivedX, typename DerivedY, typename Scalar>
MarginalLikelihood<Scalar> log_marginal_likelihood(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedY>& y,
                                                   const ArdHyperparameters<Scalar>& p,
                                                   bool with_gradient = true) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dims = x.cols();
  const Matrix<Scalar> kf = ard_kernel(x, x, p);
  Matrix<Scalar> k = kf;
  k.diagonal().array() += p.noise_variance;
  const JitteredCholesky<Scalar> chol = jittered_cholesky(k);
  const Vector<Scalar> alpha = chol.llt.solve(y.template cast<Scalar>());

  MarginalLikelihood<Scalar> out;
  const Scalar log_det = 2 * chol.llt.matrixLLT().diagonal().array().log().sum();
  out.value = Scalar(-0.5) * y.template cast<Scalar>().dot(alpha) - Scalar(0.5) * log_det -
              Scalar(0.5) * static_cast<Scalar>(n) * std::log(2 * std::numbers::pi_v<Scalar>);
  if (!with_gradient) return out;

  // dL/dtheta = 1/2 tr(W dK/dtheta),  W = alpha alpha^T - K^-1
  Matrix<Scalar> w = -chol.llt.solve(Matrix<Scalar>::Identity(n, n));
  w.noalias() += alpha * alpha.transpose();
  const Matrix<Scalar> g = w.cwiseProduct(kf);

  out.gradient.resize(dims + 2);
  out.gradient[0] = Scalar(0.5) * g.sum();
  out.gradient[dims + 1] = Scalar(0.5) * p.noise_variance * w.trace();

  // sum_ij G_ij (z_id - z_jd)^2 = 2 sum_i z_id^2 (G 1)_i - 2 (Z^T G Z)_dd
  const Matrix<Scalar> z = x.template cast<Scalar>() * p.lengthscales.cwiseInverse().asDiagonal();
  const Vector<Scalar> row_sums = g.rowwise().sum();
  const Matrix<Scalar> gz = g * z;
  out.gradient.segment(1, dims) =
      (z.cwiseProduct(z).transpose() * row_sums) - z.cwiseProduct(gz).colwise().sum().transpose();
  return out;
}

template <typename Scalar>
struct GpPrediction {
  Scalar mean{0};
  Scalar variance{0};  // latent variance plus noise variance
};

/// Exact GP posterior for fixed hyperparameters, zero prior mean.
template <typename Scalar>
class GaussianProcess {
 public:
  GaussianProcess() = default;

  static GaussianProcess condition(Matrix<Scalar> x, Vector<Scalar> y, ArdHyperparameters<Scalar> p) {
    if (x.rows() != y.size() || x.rows() == 0)
      throw UsageError("GaussianProcess: need matching, non-empty training data");
    if (p.lengthscales.size() != x.cols())
      throw UsageError("GaussianProcess: lengthscale count differs from input dimension");
    GaussianProcess gp;
    gp.x_ = std::move(x);
    gp.y_ = std::move(y);
    gp.params_ = std::move(p);
    Matrix<Scalar> k = ard_kernel(gp.x_, gp.x_, gp.params_);
    k.diagonal().array() += gp.params_.noise_variance;
    JitteredCholesky<Scalar> chol = jittered_cholesky(k);
    gp.jitter_ = chol.jitter;
    gp.llt_ = std::move(chol.llt);
    gp.alpha_ = gp.llt_.solve(gp.y_);
    return gp;
  }

  template <typename Derived>
  GpPrediction<Scalar> predict(const Eigen::MatrixBase<Derived>& x_star) const {
    const Matrix<Scalar> row = x_star.template cast<Scalar>().transpose();
    const Vector<Scalar> k_star = ard_kernel(x_, row, params_).col(0);
    const Vector<Scalar> v = llt_.matrixL().solve(k_star);
    GpPrediction<Scalar> out;
    out.mean = k_star.dot(alpha_);
    out.variance = std::max(Scalar(0), params_.signal_variance - v.squaredNorm()) + params_.noise_variance;
    return out;
  }

  const Matrix<Scalar>& inputs() const { return x_; }
  const Vector<Scalar>& targets() const { return y_; }
  const ArdHyperparameters<Scalar>& hyperparameters() const { return params_; }
  const Eigen::LLT<Matrix<Scalar>>& cholesky() const { return llt_; }
  Scalar jitter() const { return jitter_; }

  // The factorization is derived from the data and hyperparameters.
  friend bool operator==(const GaussianProcess& a, const GaussianProcess& b) {
    return same_values(a.x_, b.x_) && same_values(a.y_, b.y_) && a.params_ == b.params_;
  }

 private:
  Matrix<Scalar> x_;
  Vector<Scalar> y_;
  ArdHyperparameters<Scalar> params_;
  Eigen::LLT<Matrix<Scalar>> llt_;
  Vector<Scalar> alpha_;
  Scalar jitter_{0};
};

struct GpTrainOptions {
  double learning_rate = 0.001;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-6;   // minimum per-iteration improvement ...
  std::size_t patience = 20;  // ... that must be missed this many times in a row to stop
  std::size_t max_exact_points = 4000;
  std::size_t subset_size = 0;  // > 0: train on a uniform random subset of this size
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct GpTrainResult {
  ArdHyperparameters<Scalar> params;
  Scalar initial_objective{0};
  Scalar final_objective{0};
  std::size_t iterations = 0;
  std::vector<Eigen::Index> rows;  // training rows actually used
};

/// Starting point: s2 = mean(y^2), every l_d = median pairwise distance
/// between inputs (1 if that is zero), n2 = max(var(y) / 10, 1e-6).
template <typename DerivedX, typename DerivedY>
auto initial_hyperparameters(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  ArdHyperparameters<Scalar> p;
  const Eigen::Index n = x.rows();
  const Scalar mean = y.mean();
  p.signal_variance = std::max(Scalar(1e-6), y.squaredNorm() / static_cast<Scalar>(n));
  p.noise_variance =
      std::max(Scalar(1e-6), (y.array() - mean).square().sum() / static_cast<Scalar>(n) / 10);

  std::vector<Scalar> distances;
  const Eigen::Index m = std::min<Eigen::Index>(n, 200);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) distances.push_back((x.row(i) - x.row(j)).norm());
  Scalar median = 0;
  if (!distances.empty()) {
    auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
    std::nth_element(distances.begin(), mid, distances.end());
    median = *mid;
  }
  p.lengthscales = Vector<Scalar>::Constant(x.cols(), median > 0 ? median : Scalar(1));
  return p;
}

/// Maximizes the log marginal likelihood with Adam steps in log-parameter
/// space. Returns the best parameters seen, so the final objective is never
/// below the initial one.
template <typename DerivedX, typename DerivedY>
auto train_ard_gp(const Eigen::MatrixBase<DerivedX>& x_all, const Eigen::MatrixBase<DerivedY>& y_all,
                  const GpTrainOptions& options) {
  using Scalar = typename DerivedX::Scalar;
  const Eigen::Index n_all = x_all.rows();
  if (n_all < 2) throw UsageError("GP training needs at least 2 points");
  if (y_all.size() != n_all) throw UsageError("GP training: input and target counts differ");

  GpTrainResult<Scalar> result;
  if (options.subset_size > 0 && static_cast<Eigen::Index>(options.subset_size) < n_all) {
    Rng rng(options.seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n_all));
    for (Eigen::Index i = 0; i < n_all; ++i) all[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = 0; i < options.subset_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
      std::swap(all[i], all[j]);
    }
    all.resize(options.subset_size);
    std::sort(all.begin(), all.end());
    result.rows = std::move(all);
  } else {
    if (static_cast<std::size_t>(n_all) > options.max_exact_points)
      throw UsageError("GP training: " + std::to_string(n_all) + " points exceed the exact-GP cap of " +
                       std::to_string(options.max_exact_points) + "; set a subset size");
    for (Eigen::Index i = 0; i < n_all; ++i) result.rows.push_back(i);
  }

  const auto n = static_cast<Eigen::Index>(result.rows.size());
  Matrix<Scalar> x(n, x_all.cols());
  Vector<Scalar> y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = x_all.row(result.rows[static_cast<std::size_t>(i)]).template cast<Scalar>();
    y[i] = static_cast<Scalar>(y_all[result.rows[static_cast<std::size_t>(i)]]);
  }

  ArdHyperparameters<Scalar> start = initial_hyperparameters(x, y);
  Vector<Scalar> theta = start.to_log();
  Vector<Scalar> m1 = Vector<Scalar>::Zero(theta.size());
  Vector<Scalar> m2 = Vector<Scalar>::Zero(theta.size());
  constexpr Scalar beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto evaluate = [&](const Vector<Scalar>& t) {
    const auto p = ArdHyperparameters<Scalar>::from_log(t);
    auto ml = log_marginal_likelihood(x, y, p);
    if (!std::isfinite(ml.value) || !ml.gradient.allFinite())
      throw NumericError("GP marginal likelihood is not finite at " + p.describe());
    return ml;
  };

  MarginalLikelihood<Scalar> current = evaluate(theta);
  result.initial_objective = current.value;
  Scalar best_value = current.value;
  Vector<Scalar> best_theta = theta;
  std::size_t stalled = 0;
  std::size_t iter = 0;
  while (iter < options.max_iterations) {
    ++iter;
    m1 = beta1 * m1 + (1 - beta1) * current.gradient;
    m2 = beta2 * m2 + (1 - beta2) * current.gradient.cwiseAbs2();
    const Scalar c1 = 1 - std::pow(beta1, static_cast<Scalar>(iter));
    const Scalar c2 = 1 - std::pow(beta2, static_cast<Scalar>(iter));
    theta += (static_cast<Scalar>(options.learning_rate) * (m1 / c1).array() /
              ((m2 / c2).array().sqrt() + eps))
                 .matrix();
    const Scalar previous = current.value;
    current = evaluate(theta);
    if (current.value > best_value) {
      best_value = current.value;
      best_theta = theta;
    }
    stalled = (current.value - previous < static_cast<Scalar>(options.tolerance)) ? stalled + 1 : 0;
    if (stalled >= options.patience) break;
  }
  result.params = ArdHyperparameters<Scalar>::from_log(best_theta);
  result.final_objective = best_value;
  result.iterations = iter;
  return result;
}

}  // namespace fmon
