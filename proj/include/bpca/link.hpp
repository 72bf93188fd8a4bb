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
// Transfer functions and the Bregman machinery they induce: the link f, its
// inverse f*, the convex potential F (antiderivative of f, F(0) = 0), the
// conjugate F*, primal and dual Bregman divergences, and the Hessian metric
// H_F. Elementwise kinds act coordinatewise; softmax is vector-valued with
// pre-activations defined modulo the all-ones direction (resolved everywhere
// by a zero-sum convention).

#ifndef BPCA_LINK_HPP_
#define BPCA_LINK_HPP_

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

#include "bpca/common.hpp"
#include "bpca/metric.hpp"

namespace bpca {

// Bounded dual domains (sigmoid, tanh, softmax) are clipped to their interior
// by this margin before applying f*.
inline constexpr double kClipEpsilon = 1e-12;

// Tolerance for accepting a vector as a point on the probability simplex.
inline constexpr double kSimplexTol = 1e-8;

enum class LinkKind { kIdentity, kLeakyRelu, kSigmoid, kTanh, kSoftmax };

class LinkFunction {
 public:
  static LinkFunction identity(Index dim) {
    return LinkFunction(LinkKind::kIdentity, dim, 0.0);
  }
  static LinkFunction leaky_relu(double beta, Index dim) {
    if (!(beta > 0.0) || !(beta < 1.0))
      throw ConfigError("leaky-relu slope must satisfy 0 < beta < 1");
    return LinkFunction(LinkKind::kLeakyRelu, dim, beta);
  }
  static LinkFunction sigmoid(Index dim) {
    return LinkFunction(LinkKind::kSigmoid, dim, 0.0);
  }
  static LinkFunction tanh(Index dim) {
    return LinkFunction(LinkKind::kTanh, dim, 0.0);
  }
  static LinkFunction softmax(Index dim) {
    if (dim < 2) throw ConfigError("softmax link needs dim >= 2");
    return LinkFunction(LinkKind::kSoftmax, dim, 0.0);
  }

  LinkKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  double beta() const { return beta_; }
  bool is_elementwise() const { return kind_ != LinkKind::kSoftmax; }
  bool is_softmax() const { return kind_ == LinkKind::kSoftmax; }

 private:
  LinkFunction(LinkKind kind, Index dim, double beta)
      : kind_(kind), dim_(dim), beta_(beta) {
    if (dim < 1) throw ConfigError("link dimension must be positive");
  }

  LinkKind kind_;
  Index dim_;
  double beta_;
};

/// Parses the link specification strings used by the CLI and model bundles:
/// `identity`, `leaky-relu:<beta>`, `sigmoid`, `tanh`, `softmax`.
inline LinkFunction parse_link(const std::string& spec, Index dim) {
  if (spec == "identity") return LinkFunction::identity(dim);
  if (spec == "sigmoid") return LinkFunction::sigmoid(dim);
  if (spec == "tanh") return LinkFunction::tanh(dim);
  if (spec == "softmax") return LinkFunction::softmax(dim);
  const std::string prefix = "leaky-relu:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string num = spec.substr(prefix.size());
    std::size_t used = 0;
    double beta = 0.0;
    try {
      beta = std::stod(num, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad link spec '" + spec + "'");
    }
    if (used != num.size()) throw ConfigError("bad link spec '" + spec + "'");
    return LinkFunction::leaky_relu(beta, dim);
  }
  throw ConfigError("unknown link spec '" + spec + "'");
}

inline std::string link_to_string(const LinkFunction& link) {
  switch (link.kind()) {
    case LinkKind::kIdentity: return "identity";
    case LinkKind::kSigmoid: return "sigmoid";
    case LinkKind::kTanh: return "tanh";
    case LinkKind::kSoftmax: return "softmax";
    case LinkKind::kLeakyRelu: {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "leaky-relu:%.17g", link.beta());
      return buf;
    }
  }
  throw ConfigError("unreachable link kind");
}

namespace detail {

inline double sigmoid_scalar(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double softplus(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

inline double log_cosh(double u) {
  const double a = std::abs(u);
  return a + std::log1p(std::exp(-2.0 * a)) - M_LN2;
}

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// a * log(a / b) with the 0 log 0 = 0 convention.
inline double kl_term(double a, double b) {
  if (a <= 0.0) return 0.0;
  return a * (std::log(a) - std::log(b));
}

inline double logsumexp(const Vector& u) {
  const double m = u.maxCoeff();
  return m + std::log((u.array() - m).exp().sum());
}

inline Vector softmax_vec(const Vector& u) {
  Vector e = (u.array() - u.maxCoeff()).exp();
  return e / e.sum();
}

inline void check_finite(const Vector& v, const char* op) {
  if (!v.allFinite())
    throw DataError(std::string(op) + ": non-finite input");
}

inline void check_dim(const LinkFunction& link, const Vector& v,
                      const char* op) {
  if (v.size() != link.dim())
    throw DataError(std::string(op) + ": vector length " +
                    std::to_string(v.size()) + " does not match link dim " +
                    std::to_string(link.dim()));
}

// Membership in the closed dual domain dom F*.
inline void check_dual_domain(const LinkFunction& link, const Vector& x,
                              const char* op) {
  check_dim(link, x, op);
  check_finite(x, op);
  switch (link.kind()) {
    case LinkKind::kIdentity:
    case LinkKind::kLeakyRelu:
      return;
    case LinkKind::kSigmoid:
      if (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0)
        throw DataError(std::string(op) + ": value outside [0,1]");
      return;
    case LinkKind::kTanh:
      if (x.minCoeff() < -1.0 || x.maxCoeff() > 1.0)
        throw DataError(std::string(op) + ": value outside [-1,1]");
      return;
    case LinkKind::kSoftmax:
      if (x.minCoeff() < -kSimplexTol ||
          std::abs(x.sum() - 1.0) > kSimplexTol)
        throw DataError(std::string(op) + ": row is not on the simplex");
      return;
  }
}

}  // namespace detail

/// f(u). For softmax the result lies on the open simplex and sums to one.
inline Vector apply_link(const LinkFunction& link, const Vector& u) {
  detail::check_dim(link, u, "apply_link");
  detail::check_finite(u, "apply_link");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return u;
    case LinkKind::kLeakyRelu: {
      const double beta = link.beta();
      return u.unaryExpr([beta](double t) { return t >= 0.0 ? t : beta * t; });
    }
    case LinkKind::kSigmoid:
      return u.unaryExpr([](double t) { return detail::sigmoid_scalar(t); });
    case LinkKind::kTanh:
      return u.unaryExpr([](double t) { return std::tanh(t); });
    case LinkKind::kSoftmax:
      return detail::softmax_vec(u);
  }
  throw ConfigError("unreachable link kind");
}

/// f*(x), clipping bounded dual domains to their interior by kClipEpsilon
/// (softmax rows are renormalized after clipping). The softmax result uses
/// the zero-sum gauge.
inline Vector apply_inverse_link(const LinkFunction& link, const Vector& x) {
  detail::check_dual_domain(link, x, "apply_inverse_link");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return x;
    case LinkKind::kLeakyRelu: {
      const double beta = link.beta();
      return x.unaryExpr([beta](double t) { return t >= 0.0 ? t : t / beta; });
    }
    case LinkKind::kSigmoid:
      return x.unaryExpr([](double t) {
        const double c =
            std::min(std::max(t, kClipEpsilon), 1.0 - kClipEpsilon);
        return std::log(c) - std::log1p(-c);
      });
    case LinkKind::kTanh:
      return x.unaryExpr([](double t) {
        const double c =
            std::min(std::max(t, -1.0 + kClipEpsilon), 1.0 - kClipEpsilon);
        return std::atanh(c);
      });
    case LinkKind::kSoftmax: {
      Vector p = x.cwiseMax(kClipEpsilon);
      p /= p.sum();
      Vector u = p.array().log();
      u.array() -= u.mean();
      return u;
    }
  }
  throw ConfigError("unreachable link kind");
}

/// F(u), normalized so that F(0) = 0 for elementwise kinds; softmax uses
/// log-sum-exp.
inline double potential(const LinkFunction& link, const Vector& u) {
  detail::check_dim(link, u, "potential");
  detail::check_finite(u, "potential");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return 0.5 * u.squaredNorm();
    case LinkKind::kLeakyRelu: {
      const double beta = link.beta();
      double s = 0.0;
      for (Index j = 0; j < u.size(); ++j) {
        const double t = u[j];
        s += t >= 0.0 ? 0.5 * t * t : 0.5 * beta * t * t;
      }
      return s;
    }
    case LinkKind::kSigmoid: {
      double s = 0.0;
      for (Index j = 0; j < u.size(); ++j)
        s += detail::softplus(u[j]) - M_LN2;
      return s;
    }
    case LinkKind::kTanh: {
      double s = 0.0;
      for (Index j = 0; j < u.size(); ++j) s += detail::log_cosh(u[j]);
      return s;
    }
    case LinkKind::kSoftmax:
      return detail::logsumexp(u);
  }
  throw ConfigError("unreachable link kind");
}

/// F*(x) on the closed dual domain (boundary terms use 0 log 0 = 0).
inline double conjugate_potential(const LinkFunction& link, const Vector& x) {
  detail::check_dual_domain(link, x, "conjugate_potential");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return 0.5 * x.squaredNorm();
    case LinkKind::kLeakyRelu: {
      const double beta = link.beta();
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j) {
        const double t = x[j];
        s += t >= 0.0 ? 0.5 * t * t : 0.5 * t * t / beta;
      }
      return s;
    }
    case LinkKind::kSigmoid: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j)
        s += detail::xlogx(x[j]) + detail::xlogx(1.0 - x[j]) + M_LN2;
      return s;
    }
    case LinkKind::kTanh: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j)
        s += 0.5 * (detail::xlogx(1.0 + x[j]) + detail::xlogx(1.0 - x[j]));
      return s;
    }
    case LinkKind::kSoftmax: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j) s += detail::xlogx(x[j]);
      return s;
    }
  }
  throw ConfigError("unreachable link kind");
}

/// D_F(u, v) = F(u) - F(v) - f(v) . (u - v). Non-negative; zero iff u = v
/// (softmax: iff u - v is a multiple of the all-ones vector).
inline double bregman_divergence(const LinkFunction& link, const Vector& u,
                                 const Vector& v) {
  detail::check_dim(link, u, "bregman_divergence");
  detail::check_dim(link, v, "bregman_divergence");
  detail::check_finite(u, "bregman_divergence");
  detail::check_finite(v, "bregman_divergence");
  return potential(link, u) - potential(link, v) -
         apply_link(link, v).dot(u - v);
}

/// D_{F*}(x, y), evaluated in closed form per kind so boundary x values are
/// handled by the 0 log 0 convention.
inline double dual_divergence(const LinkFunction& link, const Vector& x,
                              const Vector& y) {
  detail::check_dual_domain(link, x, "dual_divergence");
  detail::check_dual_domain(link, y, "dual_divergence");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return 0.5 * (x - y).squaredNorm();
    case LinkKind::kLeakyRelu: {
      const Vector ystar = apply_inverse_link(link, y);
      return conjugate_potential(link, x) - conjugate_potential(link, y) -
             ystar.dot(x - y);
    }
    case LinkKind::kSigmoid: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j)
        s += detail::kl_term(x[j], y[j]) +
             detail::kl_term(1.0 - x[j], 1.0 - y[j]);
      return s;
    }
    case LinkKind::kTanh: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j)
        s += 0.5 * (detail::kl_term(1.0 + x[j], 1.0 + y[j]) +
                    detail::kl_term(1.0 - x[j], 1.0 - y[j]));
      return s;
    }
    case LinkKind::kSoftmax: {
      double s = 0.0;
      for (Index j = 0; j < x.size(); ++j)
        s += detail::kl_term(x[j], y[j]) - x[j] + y[j];
      return s;
    }
  }
  throw ConfigError("unreachable link kind");
}

/// H_F(m) = grad^2 F at m. Diagonal for elementwise kinds; softmax yields the
/// dense diag(p) - p p^T, which is singular along the all-ones direction.
inline Metric hessian_at(const LinkFunction& link, const Vector& m) {
  detail::check_dim(link, m, "hessian_at");
  detail::check_finite(m, "hessian_at");
  switch (link.kind()) {
    case LinkKind::kIdentity:
      return Metric::diagonal(Vector::Ones(m.size()));
    case LinkKind::kLeakyRelu: {
      const double beta = link.beta();
      // Right derivative at the kink: f'(0) = 1.
      return Metric::diagonal(
          m.unaryExpr([beta](double t) { return t >= 0.0 ? 1.0 : beta; }));
    }
    case LinkKind::kSigmoid:
      return Metric::diagonal(m.unaryExpr([](double t) {
        const double s = detail::sigmoid_scalar(t);
        return s * (1.0 - s);
      }));
    case LinkKind::kTanh:
      return Metric::diagonal(m.unaryExpr([](double t) {
        const double c = std::tanh(t);
        return 1.0 - c * c;
      }));
    case LinkKind::kSoftmax: {
      const Vector p = detail::softmax_vec(m);
      Matrix h = Matrix(p.asDiagonal()) - p * p.transpose();
      return Metric::full(std::move(h));
    }
  }
  throw ConfigError("unreachable link kind");
}

// --- row-wise batch helpers used by the fitters ---

inline Matrix apply_link_rows(const LinkFunction& link, const Matrix& u) {
  if (u.cols() != link.dim())
    throw DataError("apply_link_rows: column count does not match link dim");
  if (!u.allFinite()) throw DataError("apply_link_rows: non-finite input");
  if (!link.is_softmax()) {
    Matrix out(u.rows(), u.cols());
    for (Index i = 0; i < u.rows(); ++i)
      out.row(i) = apply_link(link, u.row(i).transpose()).transpose();
    return out;
  }
  Matrix out(u.rows(), u.cols());
  for (Index i = 0; i < u.rows(); ++i)
    out.row(i) = detail::softmax_vec(u.row(i).transpose()).transpose();
  return out;
}

inline Matrix apply_inverse_link_rows(const LinkFunction& link,
                                      const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    out.row(i) = apply_inverse_link(link, x.row(i).transpose()).transpose();
  return out;
}

inline void validate_dual_rows(const LinkFunction& link, const Matrix& x,
                               const char* op) {
  if (x.cols() != link.dim())
    throw DataError(std::string(op) +
                    ": column count does not match link dim");
  for (Index i = 0; i < x.rows(); ++i) {
    try {
      detail::check_dual_domain(link, x.row(i).transpose(), op);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " (row " + std::to_string(i) +
                      ")");
    }
  }
}

}  // namespace bpca

#endif  // BPCA_LINK_HPP_
