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
// Bregman PCA with a dual mean. Data rows x_i live in the dual
// (post-activation) domain and are approximated by f(m + V c_i), where m is
// the dual mean f*(avg x_i), V holds the principal directions, and c_i are
// per-row compression coefficients. V and {c_i} are trained by alternating
// heavy-ball gradient steps on the total dual-divergence compression loss; a
// single metric-generalized QR at the end makes V conjugate with respect to
// the Hessian of the potential at the mean, transforming the coefficients by
// the triangular factor so reconstructions are unchanged.

#ifndef BPCA_FIT_HPP_
#define BPCA_FIT_HPP_

#include <Eigen/Cholesky>

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpca/common.hpp"
#include "bpca/gqr.hpp"
#include "bpca/link.hpp"
#include "bpca/metric.hpp"

namespace bpca {

struct FitOptions {
  double lr_coeff = 0.1;                // step size for coefficient updates
  std::optional<double> lr_dirs;        // defaults to 0.01 / batch rows
  double momentum = 0.9;                // heavy-ball factor, in [0, 1)
  int max_epochs = 500;
  double tol = 1e-7;                    // relative loss-change stopping rule
  std::uint64_t seed = 0;
  Index batch_size = 0;                 // 0 = full batch
  double ema_decay = 0.99;              // streaming mean decay, in (0, 1)
  int streaming_inner_steps = 10;       // coefficient steps per batch

  void validate() const {
    if (!(lr_coeff > 0.0)) throw ConfigError("lr_coeff must be > 0");
    if (lr_dirs && !(*lr_dirs > 0.0)) throw ConfigError("lr_dirs must be > 0");
    if (!(momentum >= 0.0) || !(momentum < 1.0))
      throw ConfigError("momentum must be in [0, 1)");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
    if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
    if (!(ema_decay > 0.0) || !(ema_decay < 1.0))
      throw ConfigError("ema_decay must be in (0, 1)");
    if (streaming_inner_steps < 1)
      throw ConfigError("streaming_inner_steps must be >= 1");
  }
};

struct FitReport {
  std::vector<double> loss_history;  // total compression loss per epoch
  int epochs_run = 0;
  bool converged = false;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Fitted model: immutable after construction. The Hessian metric at the
/// mean is cached; for the softmax link it is the unregularized
/// diag(p) - p p^T, which the fitted directions are conjugate to.
class BpcaModel {
 public:
  BpcaModel(LinkFunction link, Vector mean, Matrix directions)
      : link_(std::move(link)),
        mean_(std::move(mean)),
        directions_(std::move(directions)),
        metric_at_mean_(hessian_at(link_, mean_)) {
    if (mean_.size() != link_.dim())
      throw DataError("model: mean length does not match link dim");
    if (directions_.rows() != mean_.size())
      throw DataError("model: direction rows do not match mean length");
    const Index k = directions_.cols();
    const Index d = mean_.size();
    if (k < 1 || k > d || (link_.is_softmax() && k >= d))
      throw DataError("model: component count out of range");
    if (!directions_.allFinite())
      throw DataError("model: non-finite directions");
  }

  const LinkFunction& link() const { return link_; }
  const Vector& mean() const { return mean_; }
  const Matrix& directions() const { return directions_; }
  Index dim() const { return mean_.size(); }
  Index components() const { return directions_.cols(); }
  const Metric& metric_at_mean() const { return metric_at_mean_; }
  const char* gauge() const { return link_.is_softmax() ? "zero-sum" : "none"; }

 private:
  LinkFunction link_;
  Vector mean_;
  Matrix directions_;
  Metric metric_at_mean_;
};

/// Dual mean m = f*(arithmetic row mean); minimizes the total dual
/// compression loss over constant representations.
inline Vector dual_mean(const LinkFunction& link, const Matrix& data) {
  if (data.rows() == 0) throw DataError("dual_mean: empty dataset");
  validate_dual_rows(link, data, "dual_mean");
  const Vector mean = data.colwise().mean().transpose();
  return apply_inverse_link(link, mean);
}

namespace detail {

inline Matrix reconstruct_rows(const LinkFunction& link, const Vector& mean,
                               const Matrix& v, const Matrix& c) {
  Matrix pre = c * v.transpose();
  pre.rowwise() += mean.transpose();
  return apply_link_rows(link, pre);
}

inline double total_dual_loss(const LinkFunction& link, const Matrix& x,
                              const Matrix& xhat) {
  double s = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    s += dual_divergence(link, x.row(i).transpose(), xhat.row(i).transpose());
  return s;
}

// Warm start c_i = V^T H(m) (f*(x_i) - m); exact least squares for the
// identity link once V is orthonormal.
inline Matrix warm_start_coeffs(const Vector& mean, const Metric& metric,
                                const Matrix& v, const Matrix& xstar) {
  Matrix centered = xstar.rowwise() - mean.transpose();
  return metric.applied_to_rows(centered) * v;
}

// Loss gradient with respect to the coefficient rows: (f(m + C V^T) - X) V.
inline Matrix coefficient_gradient_rows(const LinkFunction& link,
                                        const Vector& mean, const Matrix& v,
                                        const Matrix& c, const Matrix& x) {
  return (reconstruct_rows(link, mean, v, c) - x) * v;
}

// Loss gradient with respect to V: (f(m + C V^T) - X)^T C.
inline Matrix directions_gradient(const LinkFunction& link, const Vector& mean,
                                  const Matrix& v, const Matrix& c,
                                  const Matrix& x) {
  return (reconstruct_rows(link, mean, v, c) - x).transpose() * c;
}

// One heavy-ball step on the coefficient rows [lo, lo+len). Rows are
// independent, so the batched update equals the sequential per-row sweep.
inline void coefficient_step(const LinkFunction& link, const Matrix& x,
                             const Vector& mean, const Matrix& v, Matrix& c,
                             Matrix& vel_c, double lr, double momentum,
                             Index lo, Index len) {
  const Matrix xb = x.middleRows(lo, len);
  const Matrix cb = c.middleRows(lo, len);
  const Matrix grad = coefficient_gradient_rows(link, mean, v, cb, xb);
  vel_c.middleRows(lo, len) =
      momentum * vel_c.middleRows(lo, len) - lr * grad;
  c.middleRows(lo, len) += vel_c.middleRows(lo, len);
}

// One heavy-ball step on V using the residuals at the current coefficients.
inline void direction_step(const LinkFunction& link, const Matrix& x,
                           const Vector& mean, Matrix& v, const Matrix& c,
                           Matrix& vel_v, double lr, double momentum, Index lo,
                           Index len) {
  const Matrix xb = x.middleRows(lo, len);
  const Matrix cb = c.middleRows(lo, len);
  const Matrix grad = directions_gradient(link, mean, v, cb, xb);
  vel_v = momentum * vel_v - lr * grad;
  v += vel_v;
}

inline Matrix init_directions(Rng& rng, Index d, Index k) {
  return rng.gaussian(d, k, 1.0 / std::sqrt(static_cast<double>(d)));
}

/// Terminal projection: one generalized QR of V against H_F(m). For softmax
/// the metric passed to the factorization is the eps-regularized Hessian with
/// the ones-augmentation, followed by a triangular renormalization against
/// the unregularized Hessian so that V^T H_F(m) V = I_k holds exactly (the
/// renormalization scales inside the column span of Q, keeping Q^T M_eps 1
/// at zero and the triangular structure of R intact).
/// Returns the projected directions and the coefficient transform R.
inline std::pair<Matrix, Matrix> project_directions(const LinkFunction& link,
                                                    const Vector& mean,
                                                    const Matrix& v) {
  const Metric hess = hessian_at(link, mean);
  if (!link.is_softmax()) {
    QrFactors f = generalized_qr(v, hess);
    return {std::move(f.q), std::move(f.r)};
  }
  const Metric m_eps = regularize(hess, kDefaultMetricEps);
  QrFactors f = generalized_qr_softmax(v, m_eps);
  const Matrix w = f.q.transpose() * hess.mat() * f.q;
  Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success)
    throw NumericError("fit: conjugacy renormalization failed");
  const Matrix g = llt.matrixU();
  Matrix qt = f.q.transpose();
  Matrix gt = g.transpose();
  gt.triangularView<Eigen::Lower>().solveInPlace(qt);
  Matrix r = g * f.r;
  r.triangularView<Eigen::StrictlyLower>().setZero();
  return {qt.transpose(), std::move(r)};
}

struct GradientLoopState {
  Vector mean;
  Matrix directions;
  Matrix coeffs;
  FitReport report;
};

inline GradientLoopState fit_gradient_loop(const Matrix& x,
                                           const LinkFunction& link, Index k,
                                           const FitOptions& opts) {
  opts.validate();
  const Index n = x.rows();
  const Index d = x.cols();
  if (n < 2) throw DataError("fit: need at least two rows");
  if (k < 1 || k > d || (link.is_softmax() && k >= d))
    throw DataError("fit: component count out of range");
  validate_dual_rows(link, x, "fit");

  GradientLoopState st;
  st.mean = dual_mean(link, x);
  const Metric hess = hessian_at(link, st.mean);
  const Matrix xstar = apply_inverse_link_rows(link, x);

  Rng rng(opts.seed);
  st.directions = init_directions(rng, d, k);
  st.coeffs = warm_start_coeffs(st.mean, hess, st.directions, xstar);

  Matrix vel_c = Matrix::Zero(n, k);
  Matrix vel_v = Matrix::Zero(d, k);

  const double initial_loss = total_dual_loss(
      link, x, reconstruct_rows(link, st.mean, st.directions, st.coeffs));
  const double blowup = 1e6 * initial_loss + 1e-9;

  const Index batch = opts.batch_size == 0 ? n : std::min(opts.batch_size, n);
  auto& history = st.report.loss_history;
  for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    for (Index lo = 0; lo < n; lo += batch) {
      const Index len = std::min(batch, n - lo);
      coefficient_step(link, x, st.mean, st.directions, st.coeffs, vel_c,
                       opts.lr_coeff, opts.momentum, lo, len);
      const double lr_v =
          opts.lr_dirs ? *opts.lr_dirs : 0.01 / static_cast<double>(len);
      direction_step(link, x, st.mean, st.directions, st.coeffs, vel_v, lr_v,
                     opts.momentum, lo, len);
    }
    const double loss = total_dual_loss(
        link, x, reconstruct_rows(link, st.mean, st.directions, st.coeffs));
    history.push_back(loss);
    if (!std::isfinite(loss) || loss > blowup)
      throw NumericError("fit: loss diverged at epoch " +
                         std::to_string(epoch));
    if (epoch >= 2) {
      const double prev = history[history.size() - 2];
      if (std::abs(prev - loss) <=
          opts.tol * std::max(std::abs(prev), 1e-300)) {
        st.report.converged = true;
        break;
      }
    }
  }
  st.report.epochs_run = static_cast<int>(history.size());
  st.report.final_loss = history.back();
  return st;
}

}  // namespace detail

/// Total compression loss sum_i D_{F*}(x_i, f(m + V c_i)).
inline double compression_loss(const BpcaModel& model, const Matrix& data,
                               const Matrix& coeffs) {
  if (data.cols() != model.dim())
    throw DataError("compression_loss: data width does not match model");
  if (coeffs.rows() != data.rows() || coeffs.cols() != model.components())
    throw DataError("compression_loss: coefficient shape mismatch");
  validate_dual_rows(model.link(), data, "compression_loss");
  const Matrix xhat = detail::reconstruct_rows(model.link(), model.mean(),
                                               model.directions(), coeffs);
  return detail::total_dual_loss(model.link(), data, xhat);
}

struct FitResult {
  BpcaModel model;
  Matrix coeffs;
  FitReport report;
};

/// Fits the model by alternating heavy-ball gradient steps, then applies the
/// terminal conjugating projection. Returned coefficients are transformed by
/// the triangular factor so that decoded reconstructions are unchanged.
inline FitResult fit(const Matrix& data, const LinkFunction& link, Index k,
                     const FitOptions& opts = {}) {
  detail::GradientLoopState st =
      detail::fit_gradient_loop(data, link, k, opts);
  auto [q, r] = detail::project_directions(link, st.mean, st.directions);
  Matrix coeffs = st.coeffs * r.transpose();
  return FitResult{BpcaModel(link, std::move(st.mean), std::move(q)),
                   std::move(coeffs), std::move(st.report)};
}

struct StreamingFitResult {
  BpcaModel model;
  FitReport report;
};

/// Online variant: the arithmetic mean is tracked by an exponential moving
/// average (initialized at the first batch mean), the dual mean is refreshed
/// each batch, coefficients are re-warm-started per batch and refined for a
/// fixed number of inner steps before a single directions step.
inline StreamingFitResult fit_streaming(const std::vector<Matrix>& batches,
                                        const LinkFunction& link, Index k,
                                        const FitOptions& opts = {}) {
  opts.validate();
  if (batches.empty()) throw DataError("fit_streaming: no batches");
  const Index d = batches.front().cols();
  if (k < 1 || k > d || (link.is_softmax() && k >= d))
    throw DataError("fit_streaming: component count out of range");
  for (const Matrix& b : batches) {
    if (b.rows() == 0) throw DataError("fit_streaming: empty batch");
    if (b.cols() != d) throw DataError("fit_streaming: inconsistent widths");
    validate_dual_rows(link, b, "fit_streaming");
  }

  Rng rng(opts.seed);
  Matrix v = detail::init_directions(rng, d, k);
  Matrix vel_v = Matrix::Zero(d, k);
  Vector xbar;
  Vector mean;
  FitReport report;

  for (std::size_t t = 0; t < batches.size(); ++t) {
    const Matrix& b = batches[t];
    const Vector bm = b.colwise().mean().transpose();
    xbar = (t == 0) ? bm
                    : Vector(opts.ema_decay * xbar +
                             (1.0 - opts.ema_decay) * bm);
    mean = apply_inverse_link(link, xbar);
    const Metric hess = hessian_at(link, mean);
    const Matrix xstar = apply_inverse_link_rows(link, b);
    Matrix coeffs = detail::warm_start_coeffs(mean, hess, v, xstar);
    Matrix vel_c = Matrix::Zero(b.rows(), coeffs.cols());
    for (int s = 0; s < opts.streaming_inner_steps; ++s)
      detail::coefficient_step(link, b, mean, v, coeffs, vel_c, opts.lr_coeff,
                               opts.momentum, 0, b.rows());
    const double lr_v =
        opts.lr_dirs ? *opts.lr_dirs : 0.01 / static_cast<double>(b.rows());
    detail::direction_step(link, b, mean, v, coeffs, vel_v, lr_v,
                           opts.momentum, 0, b.rows());
    if (!v.allFinite())
      throw NumericError("fit_streaming: directions diverged at batch " +
                         std::to_string(t));
    const double loss = detail::total_dual_loss(
        link, b, detail::reconstruct_rows(link, mean, v, coeffs));
    report.loss_history.push_back(loss);
    if (!std::isfinite(loss))
      throw NumericError("fit_streaming: loss diverged at batch " +
                         std::to_string(t));
  }
  report.epochs_run = static_cast<int>(report.loss_history.size());
  report.final_loss = report.loss_history.back();

  auto [q, r] = detail::project_directions(link, mean, v);
  (void)r;  // no global coefficients to transform
  return StreamingFitResult{BpcaModel(link, std::move(mean), std::move(q)),
                            std::move(report)};
}

/// Minimizes c -> D_{F*}(x, f(m + V c)) by heavy-ball descent from the warm
/// start V^T H(m) (f*(x) - m), stopping once the gradient norm falls below
/// 1e-6 * (1 + ||x||) or after max_epochs steps.
inline Vector encode(const BpcaModel& model, const Vector& x,
                     const FitOptions& opts = {}) {
  opts.validate();
  detail::check_dual_domain(model.link(), x, "encode");
  const Matrix& v = model.directions();
  const Vector xstar = apply_inverse_link(model.link(), x);
  const Vector centered = xstar - model.mean();
  Vector c = v.transpose() * model.metric_at_mean().apply(centered);
  Vector vel = Vector::Zero(c.size());
  const double threshold = 1e-6 * (1.0 + x.norm());
  for (int it = 0; it < opts.max_epochs; ++it) {
    const Vector recon =
        apply_link(model.link(), model.mean() + v * c);
    const Vector grad = v.transpose() * (recon - x);
    if (!grad.allFinite() || !c.allFinite())
      throw NumericError("encode: diverged at iteration " +
                         std::to_string(it));
    if (grad.norm() <= threshold) break;
    vel = opts.momentum * vel - opts.lr_coeff * grad;
    c += vel;
  }
  if (!c.allFinite()) throw NumericError("encode: diverged");
  return c;
}

/// f(m + V c): a point in the dual domain.
inline Vector decode(const BpcaModel& model, const Vector& c) {
  if (c.size() != model.components())
    throw DataError("decode: coefficient length does not match model");
  if (!c.allFinite()) throw DataError("decode: non-finite coefficients");
  return apply_link(model.link(), model.mean() + model.directions() * c);
}

inline Matrix encode_rows(const BpcaModel& model, const Matrix& data,
                          const FitOptions& opts = {}) {
  Matrix out(data.rows(), model.components());
  for (Index i = 0; i < data.rows(); ++i)
    out.row(i) = encode(model, data.row(i).transpose(), opts).transpose();
  return out;
}

inline Matrix decode_rows(const BpcaModel& model, const Matrix& coeffs) {
  if (coeffs.cols() != model.components())
    throw DataError("decode: coefficient width does not match model");
  if (!coeffs.allFinite()) throw DataError("decode: non-finite coefficients");
  return detail::reconstruct_rows(model.link(), model.mean(),
                                  model.directions(), coeffs);
}

}  // namespace bpca

#endif  // BPCA_FIT_HPP_
