#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "slgp/core.hpp"
#include "slgp/geometry.hpp"

namespace slgp {

/// Hyperparameters of the marginal covariance, on the variance-free scale:
/// correlation decay phi and noise-to-spatial variance ratio
/// alpha = tau^2 / sigma^2. The overall scale sigma^2 is integrated out by
/// the conjugate fit, so it never appears here.
struct CovarianceSpec {
  double phi = 1.0;
  double alpha = 0.0;
};

inline void validate(const CovarianceSpec& spec) {
  if (!(spec.phi > 0.0) || !std::isfinite(spec.phi))
    throw std::invalid_argument("CovarianceSpec: phi must be positive and finite");
  if (!(spec.alpha >= 0.0) || !std::isfinite(spec.alpha))
    throw std::invalid_argument("CovarianceSpec: alpha must be nonnegative and finite");
}

/// Exponential correlation in distance d >= 0.
inline double correlation(double d, double phi) { return std::exp(-phi * d); }

/// Decay rate that puts the effective range (correlation 0.05) at d0.
inline double phi_for_effective_range(double d0) {
  if (!(d0 > 0.0)) throw std::invalid_argument("phi_for_effective_range: d0 must be positive");
  return -std::log(0.05) / d0;
}

/// Cross-correlation matrix between two location sets, rows of A by rows of B.
inline Matrix corr_matrix(const Matrix& a, const Matrix& b, double phi) {
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Point pi = a.row(i).transpose();
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      out(i, j) = correlation(dist(pi, b.row(j).transpose()), phi);
  }
  return out;
}

/// Knot-set correlation structure shared by the low-rank component: the knot
/// correlation matrix (with a small diagonal jitter for factorization
/// stability) and its Cholesky factor. Everything the low-rank projection
/// needs at a point derives from this.
class ResidualCorrelation {
 public:
  ResidualCorrelation(KnotSet knots, double phi, double jitter = 1e-8)
      : knots_(std::move(knots)), phi_(phi), jitter_(jitter) {
    if (knots_.r() < 1) throw std::invalid_argument("ResidualCorrelation: need at least one knot");
    if (!(phi > 0.0)) throw std::invalid_argument("ResidualCorrelation: phi must be positive");
    if (!(jitter >= 0.0)) throw std::invalid_argument("ResidualCorrelation: jitter must be nonnegative");
    r_star_ = corr_matrix(knots_.coords, knots_.coords, phi_);
    r_star_.diagonal().array() += jitter_;
    llt_.compute(r_star_);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("ResidualCorrelation: knot correlation matrix is not positive definite");
  }

  const KnotSet& knots() const { return knots_; }
  Eigen::Index r() const { return knots_.r(); }
  double phi() const { return phi_; }
  double jitter() const { return jitter_; }
  const Matrix& knot_corr() const { return r_star_; }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

  /// Correlation vector from every knot to s.
  Vector knot_corr_to(const Point& s) const {
    Vector v(knots_.r());
    for (Eigen::Index k = 0; k < knots_.r(); ++k)
      v(k) = correlation(dist(s, knots_.point(k)), phi_);
    return v;
  }

  /// Whitened knot projection u(s) = L^-1 R(knots, s); the low-rank
  /// correlation between s and t is u(s) . u(t).
  Vector knot_projection(const Point& s) const {
    Vector v = knot_corr_to(s);
    llt_.matrixL().solveInPlace(v);
    return v;
  }

  /// Interpolation weights J(s) mapping knot-process values to s.
  Vector gpp_weights(const Point& s) const { return llt_.solve(knot_corr_to(s)); }

 private:
  KnotSet knots_;
  double phi_;
  double jitter_;
  Matrix r_star_;
  Eigen::LLT<Matrix> llt_;
};

/// Interpolation weight rows J for a batch of locations (n x r). Solved in
/// chunks to keep the cross-correlation scratch bounded.
inline Matrix build_J(const Matrix& coords, const ResidualCorrelation& rc) {
  const Eigen::Index n = coords.rows();
  const Eigen::Index r = rc.r();
  Matrix J(n, r);
  constexpr Eigen::Index chunk = 4096;
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    Matrix rhs = corr_matrix(rc.knots().coords, coords.middleRows(start, len), rc.phi());
    J.middleRows(start, len) = rc.llt().solve(rhs).transpose();
  }
  return J;
}

/// Marginal residual correlation between two points after removing the
/// low-rank component, plus the noise spike when the points coincide:
/// omega(s, t) = corr(s, t) + alpha 1{s == t} - u(s) . u(t).
inline double omega_entry(const ResidualCorrelation& rc, double alpha, const Point& s, const Point& t) {
  const double spike = (s.x() == t.x() && s.y() == t.y()) ? alpha : 0.0;
  return correlation(dist(s, t), rc.phi()) + spike - rc.knot_projection(s).dot(rc.knot_projection(t));
}

/// Noise-free residual correlation (the process left over after the knot
/// component is projected out).
inline double residual_gamma(const ResidualCorrelation& rc, const Point& s, const Point& t) {
  return correlation(dist(s, t), rc.phi()) - rc.knot_projection(s).dot(rc.knot_projection(t));
}

/// Correlation operator for the full marginal model without a low-rank part:
/// R(S; phi) + alpha I over an owned location set. Entries are computed on
/// demand; nothing n x n is ever stored.
class MarginalOperator {
 public:
  MarginalOperator(Matrix coords, double phi, double alpha)
      : coords_(std::move(coords)), phi_(phi), alpha_(alpha) {
    validate(CovarianceSpec{phi_, alpha_});
  }

  int size() const { return static_cast<int>(coords_.rows()); }
  const Matrix& coords() const { return coords_; }
  Point coord(int i) const { return coords_.row(i).transpose(); }
  double phi() const { return phi_; }
  double alpha() const { return alpha_; }

  double entry(int i, int j) const {
    const double c = correlation(dist(coord(i), coord(j)), phi_);
    return i == j ? c + alpha_ : c;
  }

  Matrix block(std::span<const int> idx) const {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix out(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      out(a, a) = 1.0 + alpha_;
      for (Eigen::Index b = a + 1; b < k; ++b)
        out(a, b) = out(b, a) = entry(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    return out;
  }

  Vector cross_rows(int i, std::span<const int> idx) const {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out(static_cast<Eigen::Index>(k)) = entry(idx[k], i);
    return out;
  }

  /// Point context is the per-point scratch prediction reuses across
  /// cross() calls; the plain marginal needs none.
  Vector point_context(const Point&) const { return Vector(); }

  double cross(const Point& s, const Vector&, int j) const {
    const Point t = coord(j);
    const double spike = (s.x() == t.x() && s.y() == t.y()) ? alpha_ : 0.0;
    return correlation(dist(s, t), phi_) + spike;
  }

  /// Augmented design row at s: no low-rank columns to append.
  Vector design_row(const Point&, const Vector& x_row) const { return x_row; }

  MarginalOperator subset(const std::vector<int>& rows) const {
    return MarginalOperator(permute_rows(coords_, rows), phi_, alpha_);
  }

 private:
  Matrix coords_;
  double phi_;
  double alpha_;
};

/// Correlation operator for the sparse-plus-low-rank marginal: the residual
/// omega(s_i, s_j) = corr + alpha 1{i == j} - U_i . U_j, with
/// U = R(S, knots) L^-T cached once (n x r) so entries cost O(r).
class SlgpResidualOperator {
 public:
  SlgpResidualOperator(Matrix coords, double alpha, std::shared_ptr<const ResidualCorrelation> rc)
      : coords_(std::move(coords)), alpha_(alpha), rc_(std::move(rc)) {
    if (!rc_) throw std::invalid_argument("SlgpResidualOperator: missing residual correlation");
    validate(CovarianceSpec{rc_->phi(), alpha_});
    const Eigen::Index n = coords_.rows();
    U_.resize(n, rc_->r());
    constexpr Eigen::Index chunk = 4096;
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (Eigen::Index start = 0; start < n; start += chunk) {
      const Eigen::Index len = std::min(chunk, n - start);
      Matrix rhs = corr_matrix(rc_->knots().coords, coords_.middleRows(start, len), rc_->phi());
      rc_->llt().matrixL().solveInPlace(rhs);
      U_.middleRows(start, len) = rhs.transpose();
    }
  }

  int size() const { return static_cast<int>(coords_.rows()); }
  const Matrix& coords() const { return coords_; }
  Point coord(int i) const { return coords_.row(i).transpose(); }
  double phi() const { return rc_->phi(); }
  double alpha() const { return alpha_; }
  const ResidualCorrelation& residual() const { return *rc_; }
  std::shared_ptr<const ResidualCorrelation> residual_ptr() const { return rc_; }
  const Matrix& U() const { return U_; }

  double entry(int i, int j) const {
    const double c = correlation(dist(coord(i), coord(j)), rc_->phi());
    const double spike = i == j ? alpha_ : 0.0;
    return c + spike - U_.row(i).dot(U_.row(j));
  }

  Matrix block(std::span<const int> idx) const {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix usub(k, rc_->r());
    Matrix out(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      usub.row(a) = U_.row(idx[static_cast<std::size_t>(a)]);
      out(a, a) = 1.0 + alpha_;
      const Point pa = coord(idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = a + 1; b < k; ++b)
        out(a, b) = out(b, a) =
            correlation(dist(pa, coord(idx[static_cast<std::size_t>(b)])), rc_->phi());
    }
    out.noalias() -= usub * usub.transpose();
    return out;
  }

  Vector cross_rows(int i, std::span<const int> idx) const {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Vector out(k);
    Matrix usub(k, rc_->r());
    const Point pi = coord(i);
    for (Eigen::Index a = 0; a < k; ++a) {
      const int j = idx[static_cast<std::size_t>(a)];
      usub.row(a) = U_.row(j);
      out(a) = correlation(dist(pi, coord(j)), rc_->phi()) + (i == j ? alpha_ : 0.0);
    }
    out.noalias() -= usub * U_.row(i).transpose();
    return out;
  }

  Vector point_context(const Point& s) const { return rc_->knot_projection(s); }

  double cross(const Point& s, const Vector& u_s, int j) const {
    const Point t = coord(j);
    const double spike = (s.x() == t.x() && s.y() == t.y()) ? alpha_ : 0.0;
    return correlation(dist(s, t), rc_->phi()) + spike - U_.row(j).dot(u_s);
  }

  /// Augmented design row at s: covariates followed by the knot
  /// interpolation weights.
  Vector design_row(const Point& s, const Vector& x_row) const {
    Vector out(x_row.size() + rc_->r());
    out.head(x_row.size()) = x_row;
    out.tail(rc_->r()) = rc_->gpp_weights(s);
    return out;
  }

  SlgpResidualOperator subset(const std::vector<int>& rows) const {
    SlgpResidualOperator out;
    out.coords_ = permute_rows(coords_, rows);
    out.alpha_ = alpha_;
    out.rc_ = rc_;
    out.U_.resize(static_cast<Eigen::Index>(rows.size()), rc_->r());
    for (std::size_t k = 0; k < rows.size(); ++k)
      out.U_.row(static_cast<Eigen::Index>(k)) = U_.row(rows[k]);
    return out;
  }

 private:
  SlgpResidualOperator() = default;

  Matrix coords_;
  double alpha_ = 0.0;
  std::shared_ptr<const ResidualCorrelation> rc_;
  Matrix U_;
};

}  // namespace slgp
