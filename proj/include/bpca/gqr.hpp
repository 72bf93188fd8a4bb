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
//
// Householder QR and its metric-generalized extension: A = Q R with
// Q^T M Q = I for an SPD metric M, computed as Q~, R = QR(sqrt(M) A) and
// Q = sqrt(M^-1) Q~. The softmax variant prepends an all-ones column before
// factorizing and drops it afterwards, which forces Q^T M 1 = 0.

#ifndef BPCA_GQR_HPP_
#define BPCA_GQR_HPP_

#include <string>
#include <utility>

#include "bpca/common.hpp"
#include "bpca/metric.hpp"

namespace bpca {

// A pivot |R_jj| below kRankTol * ||A||_F means rank deficiency.
inline constexpr double kRankTol = 1e-12;

struct QrFactors {
  Matrix q;       // m x n, metric-conjugate columns
  Matrix r;       // n x n, upper-triangular with non-negative diagonal
  Metric metric;  // the metric Q is conjugate with respect to
};

/// Thin Householder QR with Q^T Q = I_n and a non-negative R diagonal.
/// Throws NumericError when a pivot falls below kRankTol * ||A||_F.
inline QrFactors qr_householder(const Matrix& a) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (n == 0 || m == 0) throw DataError("qr: empty matrix");
  if (n > m) throw DataError("qr: need cols <= rows for a thin factorization");
  const double fro = a.norm();
  if (fro == 0.0) throw NumericError("qr: rank-deficient input (zero matrix)");

  Matrix r = a;
  Matrix vs = Matrix::Zero(m, n);  // Householder vectors, v(0) = 1
  Vector betas = Vector::Zero(n);

  for (Index j = 0; j < n; ++j) {
    const Index len = m - j;
    Vector x = r.col(j).tail(len);
    const double alpha = x[0];
    const double sigma = len > 1 ? x.tail(len - 1).squaredNorm() : 0.0;
    double beta = 0.0;
    Vector v = Vector::Zero(len);
    v[0] = 1.0;
    if (sigma == 0.0) {
      if (alpha < 0.0) beta = 2.0;  // bare sign flip
    } else {
      const double mu = std::sqrt(alpha * alpha + sigma);
      // Both branches realize v = x - ||x|| e1; the second avoids
      // cancellation when alpha > 0.
      const double v0 = alpha <= 0.0 ? alpha - mu : -sigma / (alpha + mu);
      beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
      v.tail(len - 1) = x.tail(len - 1) / v0;
    }
    betas[j] = beta;
    vs.col(j).tail(len) = v;
    if (beta != 0.0) {
      auto block = r.block(j, j, len, n - j);
      const Eigen::RowVectorXd w = beta * (v.transpose() * block);
      block.noalias() -= v * w;
    }
  }

  // The sign convention above makes every pivot +||x||, so the diagonal of R
  // is already non-negative; the check below is the rank gate.
  for (Index j = 0; j < n; ++j) {
    if (std::abs(r(j, j)) < kRankTol * fro)
      throw NumericError("qr: rank-deficient input (pivot " +
                         std::to_string(j) + ")");
  }

  // Accumulate the thin Q by applying the reflections, in reverse, to the
  // first n columns of the identity.
  Matrix q = Matrix::Identity(m, n);
  for (Index j = n - 1; j >= 0; --j) {
    const double beta = betas[j];
    if (beta == 0.0) continue;
    const Index len = m - j;
    const Vector v = vs.col(j).tail(len);
    auto block = q.block(j, 0, len, n);
    const Eigen::RowVectorXd w = beta * (v.transpose() * block);
    block.noalias() -= v * w;
  }

  r.triangularView<Eigen::StrictlyLower>().setZero();
  Matrix thin_r = r.topRows(n);
  return QrFactors{std::move(q), std::move(thin_r),
                   Metric::diagonal(Vector::Ones(m))};
}

/// Generalized QR: A = Q R with Q^T M Q = I_n.
inline QrFactors generalized_qr(const Matrix& a, const Metric& m) {
  if (m.dim() != a.rows())
    throw DataError("generalized_qr: metric dim does not match matrix rows");
  if (m.is_diagonal()) {
    // Diagonal metrics reduce to row scalings around the standard sweep.
    detail::check_positive_diag(m.diag(), "generalized_qr");
    const Vector s = m.diag().cwiseSqrt();
    QrFactors f = qr_householder(s.asDiagonal() * a);
    f.q = s.cwiseInverse().asDiagonal() * f.q;
    f.metric = m;
    return f;
  }
  const Metric root = metric_sqrt(m);
  const Metric inv_root = metric_inv_sqrt(m);
  QrFactors f = qr_householder(root.apply(a));
  f.q = inv_root.apply(f.q);
  f.metric = m;
  return f;
}

/// Ones-augmented generalized QR for the softmax gauge: factorizes
/// [1_m | A], then drops the first column of Q and the first row and column
/// of R. The result satisfies Q^T M Q = I_n, Q^T M 1_m = 0, and
/// A = Q R + 1_m r0^T where r0 is the dropped first-row remainder.
inline QrFactors generalized_qr_softmax(const Matrix& a, const Metric& m) {
  const Index rows = a.rows();
  const Index n = a.cols();
  if (n >= rows)
    throw DataError("generalized_qr_softmax: need cols < rows");
  Matrix augmented(rows, n + 1);
  augmented.col(0).setOnes();
  augmented.rightCols(n) = a;
  QrFactors f = generalized_qr(augmented, m);
  Matrix q = f.q.rightCols(n);
  Matrix r = f.r.bottomRightCorner(n, n);
  return QrFactors{std::move(q), std::move(r), f.metric};
}

}  // namespace bpca

#endif  // BPCA_GQR_HPP_
