#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>

#include "slgp/conjugate.hpp"
#include "slgp/core.hpp"
#include "slgp/geometry.hpp"
#include "slgp/predict.hpp"

namespace slgp {

/// Reference implementations that materialize every matrix and solve densely.
/// They exist to validate the sparse pipeline, so they deliberately share
/// none of its machinery: correlation entries, the marginal decomposition,
/// and the posterior algebra are all rebuilt here from the model definition.
namespace dense {

namespace detail {

inline double kernel(double x1, double y1, double x2, double y2, double phi) {
  const double dx = x1 - x2;
  const double dy = y1 - y2;
  return std::exp(-phi * std::sqrt(dx * dx + dy * dy));
}

inline Matrix cross_corr(const Matrix& a, const Matrix& b, double phi) {
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      out(i, j) = kernel(a(i, 0), a(i, 1), b(j, 0), b(j, 1), phi);
  return out;
}

struct DenseModel {
  Matrix omega;          // n x n working correlation
  Eigen::LLT<Matrix> omega_llt;
  Matrix X_star;         // n x q
  Vector mu_star;
  Matrix V_star_inv;
  Matrix J;              // n x r (empty when no knots)
  Matrix knot_corr;      // r x r, jittered
  Eigen::LLT<Matrix> knot_llt;
  Eigen::Index p = 0, r = 0;
};

inline DenseModel assemble(const SpatialDataset& ds, double alpha, double phi,
                           const KnotSet* knots, const PriorSpec& prior, double jitter) {
  if (!(phi > 0.0)) throw std::invalid_argument("dense oracle: phi must be positive");
  if (!(alpha >= 0.0)) throw std::invalid_argument("dense oracle: alpha must be nonnegative");
  validate(prior);
  const Eigen::Index n = ds.n();
  if (n > 2000) throw std::invalid_argument("dense oracle: n exceeds the dense bound of 2000");

  DenseModel m;
  m.p = ds.p();
  m.omega = cross_corr(ds.coords(), ds.coords(), phi);
  m.omega.diagonal().array() += alpha;

  if (knots) {
    m.r = knots->r();
    m.knot_corr = cross_corr(knots->coords, knots->coords, phi);
    m.knot_corr.diagonal().array() += jitter;
    m.knot_llt.compute(m.knot_corr);
    if (m.knot_llt.info() != Eigen::Success)
      throw std::runtime_error("dense oracle: knot correlation is not positive definite");
    const Matrix cross = cross_corr(ds.coords(), knots->coords, phi);  // n x r
    m.J = m.knot_llt.solve(cross.transpose()).transpose();
    m.omega.noalias() -= m.J * m.knot_corr * m.J.transpose();
  }
  m.omega_llt.compute(m.omega);
  if (m.omega_llt.info() != Eigen::Success)
    throw std::runtime_error("dense oracle: working correlation is not positive definite");

  const Eigen::Index q = m.p + m.r;
  Vector mu_beta = prior.mu_beta.size() > 0 ? prior.mu_beta : Vector(Vector::Zero(m.p));
  Matrix V_beta = prior.V_beta.size() > 0 ? prior.V_beta : Matrix(1e4 * Matrix::Identity(m.p, m.p));
  if (mu_beta.size() != m.p || V_beta.rows() != m.p)
    throw std::invalid_argument("dense oracle: prior size mismatch");
  Eigen::LLT<Matrix> vllt(V_beta);
  if (vllt.info() != Eigen::Success)
    throw std::invalid_argument("dense oracle: V_beta is not positive definite");

  m.X_star.resize(n, q);
  m.X_star.leftCols(m.p) = ds.X();
  if (m.r > 0) m.X_star.rightCols(m.r) = m.J;
  m.mu_star = Vector::Zero(q);
  m.mu_star.head(m.p) = mu_beta;
  m.V_star_inv = Matrix::Zero(q, q);
  m.V_star_inv.topLeftCorner(m.p, m.p) = vllt.solve(Matrix::Identity(m.p, m.p));
  if (m.r > 0)
    m.V_star_inv.bottomRightCorner(m.r, m.r) = m.knot_llt.solve(Matrix::Identity(m.r, m.r));
  return m;
}

inline ConjugateFit posterior_of(const DenseModel& m, const Vector& y, const PriorSpec& prior) {
  const Eigen::Index n = y.size();
  const Eigen::Index q = m.X_star.cols();
  const Matrix OiX = m.omega_llt.solve(m.X_star);
  const Vector Oiy = m.omega_llt.solve(y);

  ConjugateFit out;
  out.n = n;
  out.p = m.p;
  out.r = m.r;
  out.B = m.V_star_inv + m.X_star.transpose() * OiX;
  out.b_vec = m.V_star_inv * m.mu_star + m.X_star.transpose() * Oiy;
  Eigen::LLT<Matrix> bllt(out.B);
  if (bllt.info() != Eigen::Success)
    throw std::runtime_error("dense oracle: posterior precision is not positive definite");
  out.g = bllt.solve(out.b_vec);
  out.V = bllt.solve(Matrix::Identity(q, q));
  out.a_star = prior.a_sigma + 0.5 * static_cast<double>(n);
  out.b_star = prior.b_sigma + 0.5 * (m.mu_star.dot(m.V_star_inv * m.mu_star) + y.dot(Oiy) -
                                      out.b_vec.dot(out.g));
  return out;
}

}  // namespace detail

/// Exact conjugate posterior with every matrix materialized (n <= 2000).
inline ConjugateFit dense_posterior(const SpatialDataset& ds, double alpha, double phi,
                                    const KnotSet* knots, const PriorSpec& prior,
                                    double jitter = 0.0) {
  const auto m = detail::assemble(ds, alpha, phi, knots, prior, jitter);
  return detail::posterior_of(m, ds.y(), prior);
}

/// Exact kriging at one location, conditioning on every training point.
inline PredictiveDistribution dense_krig(const Point& s, const Vector& x_row,
                                         const SpatialDataset& ds, double alpha, double phi,
                                         const KnotSet* knots, const PriorSpec& prior,
                                         double jitter = 0.0) {
  if (x_row.size() != ds.p()) throw std::invalid_argument("dense_krig: covariate row length mismatch");
  const auto m = detail::assemble(ds, alpha, phi, knots, prior, jitter);
  const ConjugateFit fit = detail::posterior_of(m, ds.y(), prior);
  if (!(fit.a_star > 1.0)) throw std::invalid_argument("dense_krig: predictive variance needs a_star > 1");

  const Eigen::Index n = ds.n();
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool same = s.x() == ds.coords()(i, 0) && s.y() == ds.coords()(i, 1);
    z(i) = detail::kernel(s.x(), s.y(), ds.coords()(i, 0), ds.coords()(i, 1), phi) + (same ? alpha : 0.0);
  }
  Vector x_star(m.p + m.r);
  x_star.head(m.p) = x_row;
  if (m.r > 0) {
    Vector ks(m.r);
    for (Eigen::Index k = 0; k < m.r; ++k)
      ks(k) = detail::kernel(s.x(), s.y(), knots->coords(k, 0), knots->coords(k, 1), phi);
    const Vector j_s = m.knot_llt.solve(ks);
    x_star.tail(m.r) = j_s;
    z.noalias() -= m.J * (m.knot_corr * j_s);
  }

  const Vector w = m.omega_llt.solve(z);
  PredictiveDistribution out;
  out.mean = x_star.dot(fit.g) + w.dot(ds.y() - m.X_star * fit.g);
  out.v0 = x_star.dot(fit.V * x_star) + 1.0 + alpha - w.dot(z);
  out.variance = fit.b_star * out.v0 / (fit.a_star - 1.0);
  return out;
}

}  // namespace dense
}  // namespace slgp
