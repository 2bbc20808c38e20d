#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "slgp/core.hpp"
#include "slgp/covariance.hpp"
#include "slgp/nngp.hpp"

namespace slgp {

/// Normal-inverse-gamma prior for the regression coefficients and the spatial
/// variance. Empty mu_beta / V_beta mean the defaults: zero mean and a
/// diffuse diagonal 1e4 I. The shape/rate pair may be zero (improper limit);
/// posterior moments then exist only when the data supply enough information.
struct PriorSpec {
  Vector mu_beta;
  Matrix V_beta;
  double a_sigma = 2.0;
  double b_sigma = 1.0;
};

inline void validate(const PriorSpec& prior) {
  if (!(prior.a_sigma >= 0.0) || !std::isfinite(prior.a_sigma))
    throw std::invalid_argument("PriorSpec: a_sigma must be nonnegative and finite");
  if (!(prior.b_sigma >= 0.0) || !std::isfinite(prior.b_sigma))
    throw std::invalid_argument("PriorSpec: b_sigma must be nonnegative and finite");
  if (prior.mu_beta.size() > 0 && !prior.mu_beta.allFinite())
    throw std::invalid_argument("PriorSpec: mu_beta must be finite");
  if (prior.V_beta.size() > 0) {
    if (prior.V_beta.rows() != prior.V_beta.cols())
      throw std::invalid_argument("PriorSpec: V_beta must be square");
    if (!prior.V_beta.isApprox(prior.V_beta.transpose()))
      throw std::invalid_argument("PriorSpec: V_beta must be symmetric");
  }
}

/// Design and prior for the working regression: covariate columns, then (for
/// the low-rank variant) one column per knot holding interpolation weights.
/// V_star_inv is the block-diagonal prior precision over all q = p + r
/// coefficients.
struct AugmentedDesign {
  Matrix X_star;
  Vector mu_star;
  Matrix V_star_inv;
  Eigen::Index p = 0;  // leading covariate columns
  Eigen::Index r = 0;  // trailing knot columns
};

/// Assemble the augmented design. Without a low-rank component pass
/// knot_weights/rc as nullptr and the design is the covariates alone.
inline AugmentedDesign augment_design(const Matrix& X, const Matrix* knot_weights,
                                      const ResidualCorrelation* rc, const PriorSpec& prior) {
  validate(prior);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 1 || p < 1) throw std::invalid_argument("augment_design: empty design");
  if ((knot_weights == nullptr) != (rc == nullptr))
    throw std::invalid_argument("augment_design: knot weights and residual correlation go together");

  Vector mu_beta = prior.mu_beta.size() > 0 ? prior.mu_beta : Vector(Vector::Zero(p));
  Matrix V_beta = prior.V_beta.size() > 0 ? prior.V_beta : Matrix(1e4 * Matrix::Identity(p, p));
  if (mu_beta.size() != p) throw std::invalid_argument("augment_design: mu_beta length does not match design");
  if (V_beta.rows() != p) throw std::invalid_argument("augment_design: V_beta size does not match design");
  Eigen::LLT<Matrix> vllt(V_beta);
  if (vllt.info() != Eigen::Success)
    throw std::invalid_argument("augment_design: V_beta is not positive definite");

  AugmentedDesign d;
  d.p = p;
  d.r = rc ? rc->r() : 0;
  const Eigen::Index q = p + d.r;
  d.X_star.resize(n, q);
  d.X_star.leftCols(p) = X;
  d.mu_star = Vector::Zero(q);
  d.mu_star.head(p) = mu_beta;
  d.V_star_inv = Matrix::Zero(q, q);
  d.V_star_inv.topLeftCorner(p, p) = vllt.solve(Matrix::Identity(p, p));
  if (rc) {
    if (knot_weights->rows() != n || knot_weights->cols() != d.r)
      throw std::invalid_argument("augment_design: knot weight shape mismatch");
    d.X_star.rightCols(d.r) = *knot_weights;
    // prior precision of the knot-process coefficients is the inverse knot
    // correlation (same jittered matrix used everywhere else)
    d.V_star_inv.bottomRightCorner(d.r, d.r) = rc->llt().solve(Matrix::Identity(d.r, d.r));
  }
  return d;
}

/// Exact posterior of the conjugate model: coefficients | sigma^2 are normal
/// with mean g and scale matrix sigma^2 V; sigma^2 is inverse-gamma with
/// shape a_star and rate b_star.
struct ConjugateFit {
  Matrix B;       // posterior precision (scale-free)
  Vector b_vec;   // posterior linear term
  Vector g;       // posterior coefficient mean
  Matrix V;       // B^-1
  double a_star = 0.0;
  double b_star = 0.0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index r = 0;
};

/// Closed-form conjugate update given the sparse factorization of the working
/// correlation. All quadratic forms reduce to whitened inner products, so the
/// cost is O(n m q) + O(q^3) with no n x n object.
inline ConjugateFit fit_conjugate(const Vector& y, const AugmentedDesign& design,
                                  const SparseFactor& fac, const PriorSpec& prior) {
  validate(prior);
  const Eigen::Index n = y.size();
  const Eigen::Index q = design.X_star.cols();
  if (design.X_star.rows() != n) throw std::invalid_argument("fit_conjugate: design rows do not match outcome");
  if (fac.n() != n) throw std::invalid_argument("fit_conjugate: factor size does not match outcome");

  const Matrix W = whiten_columns(design.X_star, fac);
  const Vector wy = whiten(y, fac);

  ConjugateFit out;
  out.n = n;
  out.p = design.p;
  out.r = design.r;
  out.B = design.V_star_inv;
  out.B.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose());
  out.B.triangularView<Eigen::StrictlyUpper>() = out.B.transpose();
  out.b_vec = design.V_star_inv * design.mu_star;
  out.b_vec.noalias() += W.transpose() * wy;

  Eigen::LLT<Matrix> llt(out.B);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("fit_conjugate: posterior precision is not positive definite");
  out.g = llt.solve(out.b_vec);
  out.V = llt.solve(Matrix::Identity(q, q));

  out.a_star = prior.a_sigma + 0.5 * static_cast<double>(n);
  const double prior_quad = design.mu_star.dot(design.V_star_inv * design.mu_star);
  out.b_star = prior.b_sigma + 0.5 * (prior_quad + wy.dot(wy) - out.b_vec.dot(out.g));
  if (!(out.b_star > 0.0) || !std::isfinite(out.b_star))
    throw std::runtime_error("fit_conjugate: nonpositive posterior rate (degenerate fit)");
  return out;
}

struct PointEstimates {
  Vector beta;
  double sigma2 = 0.0;
  double tau2 = 0.0;
};

/// Posterior point estimates: coefficient means, the inverse-gamma posterior
/// mean of sigma^2 (needs a_star > 1), and tau^2 = alpha sigma^2.
inline PointEstimates point_estimates(const ConjugateFit& fit, double alpha) {
  if (!(fit.a_star > 1.0))
    throw std::invalid_argument("point_estimates: posterior mean of sigma^2 needs a_star > 1");
  PointEstimates pe;
  pe.beta = fit.g.head(fit.p);
  pe.sigma2 = fit.b_star / (fit.a_star - 1.0);
  pe.tau2 = alpha * pe.sigma2;
  return pe;
}

}  // namespace slgp
