#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "slgp/core.hpp"
#include "slgp/covariance.hpp"
#include "slgp/geometry.hpp"

namespace slgp {

/// Ground-truth generator settings: y = X beta + w + noise with w a
/// mean-zero spatial field (variance sigma2, exponential correlation at rate
/// phi) and independent noise of variance tau2. An empty beta means no
/// regression part (intercept-only design with a zero coefficient).
struct GeneratorSpec {
  int n = 0;
  double sigma2 = 1.0;
  double phi = 12.0;
  double tau2 = 0.5;
  Vector beta;
  std::uint64_t seed = 0;
};

/// Simulate one draw of the model, exactly: the spatial field uses the dense
/// Cholesky of its correlation matrix, which caps n. Locations are uniform
/// on the unit square unless coords is supplied. Draw order is fixed
/// (locations, covariates, field, noise) so a seed pins the output.
inline SpatialDataset simulate_gp(const GeneratorSpec& spec, const Matrix* coords_in = nullptr) {
  const int n = coords_in ? static_cast<int>(coords_in->rows()) : spec.n;
  if (n < 1) throw std::invalid_argument("simulate_gp: n must be positive");
  if (n > 20000)
    throw std::invalid_argument("simulate_gp: n exceeds the dense Cholesky bound of 20000");
  if (!(spec.phi > 0.0)) throw std::invalid_argument("simulate_gp: phi must be positive");
  if (!(spec.sigma2 >= 0.0) || !(spec.tau2 >= 0.0))
    throw std::invalid_argument("simulate_gp: variances must be nonnegative");
  if (spec.sigma2 == 0.0 && spec.tau2 == 0.0)
    throw std::invalid_argument("simulate_gp: sigma2 and tau2 cannot both be zero");
  if (coords_in && coords_in->cols() != 2)
    throw std::invalid_argument("simulate_gp: coords must be n x 2");

  Rng rng(spec.seed);

  Matrix coords;
  if (coords_in) {
    coords = *coords_in;
  } else {
    coords.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      coords(i, 0) = rng.uniform();
      coords(i, 1) = rng.uniform();
    }
  }

  const auto p = static_cast<Eigen::Index>(std::max<Eigen::Index>(1, spec.beta.size()));
  Matrix X = Matrix::Ones(n, p);
  for (Eigen::Index j = 1; j < p; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = rng.uniform();

  Vector y = spec.beta.size() > 0 ? Vector(X * spec.beta) : Vector(Vector::Zero(n));

  if (spec.sigma2 > 0.0) {
    Vector zeta(n);
    for (int i = 0; i < n; ++i) zeta(i) = rng.normal();
    Matrix R = corr_matrix(coords, coords, spec.phi);
    Eigen::LLT<Matrix> llt(R);
    if (llt.info() != Eigen::Success) {
      // random layouts can be numerically borderline at this size
      R.diagonal().array() += 1e-10;
      llt.compute(R);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("simulate_gp: spatial correlation matrix is not positive definite");
    }
    const Vector field = llt.matrixL() * zeta;
    y.noalias() += std::sqrt(spec.sigma2) * field;
  }

  if (spec.tau2 > 0.0) {
    const double sd = std::sqrt(spec.tau2);
    for (int i = 0; i < n; ++i) y(i) += sd * rng.normal();
  }

  return SpatialDataset(std::move(coords), std::move(y), std::move(X));
}

}  // namespace slgp
