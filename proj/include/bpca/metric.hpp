// Copyright 2026 The bpca Authors
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

#ifndef BPCA_METRIC_HPP_
#define BPCA_METRIC_HPP_

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <utility>

#include "bpca/common.hpp"

namespace bpca {

// Eigenvalues below kMetricSingularTol * lambda_max count as singular.
inline constexpr double kMetricSingularTol = 1e-12;

// Default relative shift used to regularize the softmax Hessian, which is
// singular along the all-ones direction.
inline constexpr double kDefaultMetricEps = 1e-6;

/// SPD Riemannian metric, stored either as a positive diagonal or as a dense
/// symmetric matrix. Degenerate (PSD) metrics can be represented; consumers
/// that need strict positive definiteness raise a singular-metric error.
class Metric {
 public:
  static Metric diagonal(Vector entries) {
    if (entries.size() == 0) throw DataError("metric: empty diagonal");
    if (!entries.allFinite())
      throw DataError("metric: non-finite diagonal entries");
    return Metric(std::move(entries));
  }

  static Metric full(Matrix m) {
    if (m.rows() == 0 || m.rows() != m.cols())
      throw DataError("metric: full form must be square and non-empty");
    if (!m.allFinite()) throw DataError("metric: non-finite entries");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw DataError("metric: matrix is not symmetric");
    m = ((m + m.transpose()) * 0.5).eval();
    return Metric(std::move(m));
  }

  Index dim() const { return diagonal_ ? diag_.size() : mat_.rows(); }
  bool is_diagonal() const { return diagonal_; }

  const Vector& diag() const { return diag_; }
  const Matrix& mat() const { return mat_; }

  Matrix dense() const {
    if (diagonal_) return diag_.asDiagonal();
    return mat_;
  }

  // M * v
  Vector apply(const Vector& v) const {
    if (diagonal_) return diag_.cwiseProduct(v);
    return mat_ * v;
  }

  // M * A
  Matrix apply(const Matrix& a) const {
    if (diagonal_) return diag_.asDiagonal() * a;
    return mat_ * a;
  }

  // A * M (M symmetric)
  Matrix applied_to_rows(const Matrix& a) const {
    if (diagonal_) return a * diag_.asDiagonal();
    return a * mat_;
  }

  double trace() const { return diagonal_ ? diag_.sum() : mat_.trace(); }

 private:
  explicit Metric(Vector d) : diagonal_(true), diag_(std::move(d)) {}
  explicit Metric(Matrix m) : diagonal_(false), mat_(std::move(m)) {}

  bool diagonal_;
  Vector diag_;
  Matrix mat_;
};

namespace detail {

// Symmetric eigendecomposition with the singularity check shared by the
// square-root routines. Returns (eigenvectors, eigenvalues).
inline std::pair<Matrix, Vector> spd_eigs(const Matrix& m, const char* op) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw NumericError(std::string(op) + ": eigendecomposition failed");
  Vector lambda = es.eigenvalues();
  const double lmax = lambda.maxCoeff();
  if (!(lmax > 0.0) || lambda.minCoeff() < kMetricSingularTol * lmax)
    throw NumericError(std::string(op) + ": singular metric");
  return {es.eigenvectors(), std::move(lambda)};
}

inline void check_positive_diag(const Vector& d, const char* op) {
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() < kMetricSingularTol * dmax)
    throw NumericError(std::string(op) + ": singular metric");
}

}  // namespace detail

/// Symmetric S with S * S = M. Diagonal metrics stay diagonal.
inline Metric metric_sqrt(const Metric& m) {
  if (m.is_diagonal()) {
    detail::check_positive_diag(m.diag(), "metric_sqrt");
    return Metric::diagonal(m.diag().cwiseSqrt());
  }
  auto [u, lambda] = detail::spd_eigs(m.mat(), "metric_sqrt");
  Vector s = lambda.cwiseMax(0.0).cwiseSqrt();
  return Metric::full(u * s.asDiagonal() * u.transpose());
}

/// Symmetric S with S * M * S = I.
inline Metric metric_inv_sqrt(const Metric& m) {
  if (m.is_diagonal()) {
    detail::check_positive_diag(m.diag(), "metric_inv_sqrt");
    return Metric::diagonal(m.diag().cwiseSqrt().cwiseInverse());
  }
  auto [u, lambda] = detail::spd_eigs(m.mat(), "metric_inv_sqrt");
  Vector s = lambda.cwiseMax(0.0).cwiseSqrt().cwiseInverse();
  return Metric::full(u * s.asDiagonal() * u.transpose());
}

/// M + (eps_rel * trace(M) / d) * I. Shifts every eigenvalue by the same
/// amount; a zero-trace metric is returned unchanged and fails downstream.
inline Metric regularize(const Metric& m, double eps_rel) {
  if (!(eps_rel > 0.0)) throw ConfigError("regularize: eps_rel must be > 0");
  const double shift = eps_rel * m.trace() / static_cast<double>(m.dim());
  if (m.is_diagonal())
    return Metric::diagonal(m.diag().array() + shift);
  Matrix out = m.mat();
  out.diagonal().array() += shift;
  return Metric::full(std::move(out));
}

}  // namespace bpca

#endif  // BPCA_METRIC_HPP_
