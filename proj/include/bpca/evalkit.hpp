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
// Evaluation oracles and metrics: closed-form PCA via the covariance
// eigendecomposition, subspace distance between orthonormal frames, average
// KL between simplex-valued reconstructions, top-1 accuracy through a stored
// readout layer, and the logit-space PCA baseline.

#ifndef BPCA_EVALKIT_HPP_
#define BPCA_EVALKIT_HPP_

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <string>
#include <utility>
#include <vector>

#include "bpca/common.hpp"
#include "bpca/link.hpp"

namespace bpca {

/// Final dense layer used to score reconstructions: logits = X W + b.
struct ReadoutLayer {
  Matrix weights;  // d x classes
  Vector bias;     // classes

  ReadoutLayer(Matrix w, Vector b) : weights(std::move(w)), bias(std::move(b)) {
    if (weights.cols() != bias.size() || weights.cols() < 2)
      throw DataError("readout: need at least two classes and matching bias");
    if (!weights.allFinite() || !bias.allFinite())
      throw DataError("readout: non-finite parameters");
  }

  Index classes() const { return weights.cols(); }
};

/// Closed-form PCA: arithmetic mean plus the top-k eigenvectors of the
/// covariance, eigenvalue-descending, each column sign-fixed so its
/// largest-magnitude entry is positive.
inline std::pair<Vector, Matrix> vanilla_pca_oracle(const Matrix& data,
                                                    Index k) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (n < 2) throw DataError("pca: need at least two rows");
  if (k < 1 || k > d) throw DataError("pca: k out of range");
  if (!data.allFinite()) throw DataError("pca: non-finite data");

  const Vector mean = data.colwise().mean().transpose();
  Matrix centered = data.rowwise() - mean.transpose();
  const Matrix cov =
      centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericError("pca: eigendecomposition failed");

  // Eigen orders ascending; take the trailing k columns reversed.
  Matrix v(d, k);
  for (Index j = 0; j < k; ++j) v.col(j) = es.eigenvectors().col(d - 1 - j);
  for (Index j = 0; j < k; ++j) {
    Index arg = 0;
    v.col(j).cwiseAbs().maxCoeff(&arg);
    if (v(arg, j) < 0.0) v.col(j) = -v.col(j);
  }
  return {mean, std::move(v)};
}

/// || V1 V1^T - V2 V2^T ||_F. Zero iff equal column spans; invariant to
/// right-rotation of either frame. Both inputs must be orthonormal.
inline double subspace_distance(const Matrix& v1, const Matrix& v2) {
  if (v1.rows() != v2.rows())
    throw DataError("subspace_distance: row mismatch");
  auto check_frame = [](const Matrix& v, const char* name) {
    const Matrix gram = v.transpose() * v;
    const Matrix eye = Matrix::Identity(v.cols(), v.cols());
    if ((gram - eye).cwiseAbs().maxCoeff() > 1e-6)
      throw DataError(std::string("subspace_distance: ") + name +
                      " is not orthonormal");
  };
  check_frame(v1, "first argument");
  check_frame(v2, "second argument");
  const Matrix diff = v1 * v1.transpose() - v2 * v2.transpose();
  return diff.norm();
}

/// Mean over rows of the KL divergence between simplex-valued rows of p and
/// p_hat.
inline double avg_kl(const Matrix& p, const Matrix& p_hat) {
  if (p.rows() != p_hat.rows() || p.cols() != p_hat.cols())
    throw DataError("avg_kl: shape mismatch");
  if (p.rows() == 0) throw DataError("avg_kl: empty input");
  const LinkFunction link = LinkFunction::softmax(p.cols());
  double s = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    s += dual_divergence(link, p.row(i).transpose(),
                         p_hat.row(i).transpose());
  return s / static_cast<double>(p.rows());
}

/// Fraction of rows whose argmax over (X W + b) matches the label; ties break
/// to the lowest class index.
inline double readout_accuracy(const Matrix& x_hat, const ReadoutLayer& layer,
                               const std::vector<int>& labels) {
  if (x_hat.rows() != static_cast<Index>(labels.size()))
    throw DataError("readout_accuracy: label count mismatch");
  if (x_hat.cols() != layer.weights.rows())
    throw DataError("readout_accuracy: width does not match readout");
  if (x_hat.rows() == 0) throw DataError("readout_accuracy: empty input");
  const Index classes = layer.classes();
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw DataError("readout_accuracy: label out of range");

  Matrix logits = x_hat * layer.weights;
  logits.rowwise() += layer.bias.transpose();
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < classes; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

/// Baseline: map simplex rows to zero-sum logits, reconstruct with k-component
/// closed-form PCA there, and map back through softmax.
inline Matrix logit_pca_baseline(const Matrix& p, Index k) {
  if (k < 1) throw ConfigError("logit_pca_baseline: k must be >= 1");
  const LinkFunction link = LinkFunction::softmax(p.cols());
  validate_dual_rows(link, p, "logit_pca_baseline");
  const Matrix logits = apply_inverse_link_rows(link, p);
  auto [mean, v] = vanilla_pca_oracle(logits, k);
  Matrix centered = logits.rowwise() - mean.transpose();
  Matrix recon = (centered * v) * v.transpose();
  recon.rowwise() += mean.transpose();
  return apply_link_rows(link, recon);
}

}  // namespace bpca

#endif  // BPCA_EVALKIT_HPP_
