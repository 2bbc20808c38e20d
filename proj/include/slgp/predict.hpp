#pragma once

#include <Eigen/Cholesky>

#include <stdexcept>
#include <string>
#include <vector>

#include "slgp/conjugate.hpp"
#include "slgp/core.hpp"
#include "slgp/covariance.hpp"
#include "slgp/geometry.hpp"

namespace slgp {

/// Exact predictive law at one location: a scaled-t with the given mean,
/// variance (posterior-mean scale), and scale-free variance factor v0 such
/// that variance = b_star v0 / (a_star - 1).
struct PredictiveDistribution {
  double mean = 0.0;
  double variance = 0.0;
  double v0 = 0.0;
};

/// Kriging prediction at s conditioning on the min(m, n) nearest training
/// locations. y and the design must be row-aligned with the operator's
/// location set. An optional prebuilt NeighborQueryIndex over op.coords()
/// speeds up repeated calls without changing results.
template <typename Op>
PredictiveDistribution predict_one(const Point& s, const Vector& x_row, const Op& op,
                                   const Vector& y, const AugmentedDesign& design,
                                   const ConjugateFit& fit, int m,
                                   const NeighborQueryIndex* index = nullptr) {
  const int n = op.size();
  if (y.size() != n || design.X_star.rows() != n)
    throw std::invalid_argument("predict_one: training arrays do not match operator size");
  if (x_row.size() != design.p)
    throw std::invalid_argument("predict_one: covariate row length does not match design");
  if (!(fit.a_star > 1.0))
    throw std::invalid_argument("predict_one: predictive variance needs a_star > 1");
  if (m < 1) throw std::invalid_argument("predict_one: m must be positive");

  const int m_eff = std::min(m, n);
  const std::vector<int> nb = index ? index->query(s, m_eff) : predict_neighbors(s, op.coords(), m_eff);

  const Vector ctx = op.point_context(s);
  Vector z(static_cast<Eigen::Index>(nb.size()));
  for (std::size_t k = 0; k < nb.size(); ++k) z(static_cast<Eigen::Index>(k)) = op.cross(s, ctx, nb[k]);

  const Matrix C = op.block(nb);
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("predict_one: singular neighbor conditioning block");
  const Vector w = llt.solve(z);

  const Vector x_star = op.design_row(s, x_row);
  if (x_star.size() != fit.g.size())
    throw std::invalid_argument("predict_one: design row length does not match fit");

  double resid_dot = 0.0;
  for (std::size_t k = 0; k < nb.size(); ++k) {
    const Eigen::Index j = nb[k];
    resid_dot += w(static_cast<Eigen::Index>(k)) * (y(j) - design.X_star.row(j).dot(fit.g));
  }

  PredictiveDistribution out;
  out.mean = x_star.dot(fit.g) + resid_dot;
  out.v0 = x_star.dot(fit.V * x_star) + 1.0 + op.alpha() - w.dot(z);
  out.variance = fit.b_star * out.v0 / (fit.a_star - 1.0);
  return out;
}

/// Batch prediction over rows of locations (k x 2) with covariate rows X0
/// (k x p). Locations are independent; the loop parallelizes and any
/// per-location failure is reported with its row index, first failing row
/// wins.
template <typename Op>
std::vector<PredictiveDistribution> predict_batch(const Matrix& locations, const Matrix& X0,
                                                  const Op& op, const Vector& y,
                                                  const AugmentedDesign& design,
                                                  const ConjugateFit& fit, int m) {
  const Eigen::Index k = locations.rows();
  if (locations.cols() != 2) throw std::invalid_argument("predict_batch: locations must be k x 2");
  if (X0.rows() != k) throw std::invalid_argument("predict_batch: covariate rows do not match locations");
  std::vector<PredictiveDistribution> out(static_cast<std::size_t>(k));
  if (k == 0) return out;

  const NeighborQueryIndex index(op.coords());
  std::vector<std::string> errors(static_cast<std::size_t>(k));
  bool failed = false;

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 64)
#endif
  for (Eigen::Index i = 0; i < k; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = predict_one(Point(locations(i, 0), locations(i, 1)),
                                                     Vector(X0.row(i).transpose()), op, y, design,
                                                     fit, m, &index);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = "prediction row " + std::to_string(i) + ": " + e.what();
      failed = true;
    }
  }
  if (failed)
    for (const auto& msg : errors)
      if (!msg.empty()) throw std::runtime_error(msg);
  return out;
}

}  // namespace slgp
