#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slgp/core.hpp"
#include "slgp/geometry.hpp"

namespace slgp {

/// Conditional variances this small mean the neighbor conditioning is
/// numerically singular (near-duplicate locations); fail loudly instead of
/// producing a garbage factor.
inline constexpr double kMinConditionalVariance = 1e-12;

/// Sparse factorization of a correlation operator K restricted to directed
/// nearest-neighbor conditioning: K^-1 ~ (I - A)^T F^-1 (I - A), with A
/// holding per-row regression weights on the neighbor sets and F = diag(f)
/// the conditional variances. Exact when every row conditions on all its
/// predecessors.
struct SparseFactor {
  std::vector<int> offsets;
  std::vector<int> neighbors;
  Vector weights;  // aligned with neighbors
  Vector f;

  int n() const { return static_cast<int>(f.size()); }
  std::span<const int> row(int i) const {
    return {neighbors.data() + offsets[static_cast<std::size_t>(i)],
            neighbors.data() + offsets[static_cast<std::size_t>(i) + 1]};
  }
  std::span<const double> row_weights(int i) const {
    return {weights.data() + offsets[static_cast<std::size_t>(i)],
            weights.data() + offsets[static_cast<std::size_t>(i) + 1]};
  }
};

/// Factorize a correlation operator over the given neighbor graph. Per row:
/// weights a_i = K[N(i), N(i)]^-1 K[N(i), i] and conditional variance
/// f_i = K[i, i] - K[i, N(i)] a_i. Rows are independent, so the loop runs in
/// parallel with bit-identical output for any thread count.
template <typename Op>
SparseFactor factorize(const Op& op, const NeighborGraph& graph) {
  const int n = op.size();
  if (graph.n() != n) throw std::invalid_argument("factorize: operator and graph sizes differ");

  SparseFactor fac;
  fac.offsets = graph.offsets;
  fac.neighbors = graph.neighbors;
  fac.weights.resize(static_cast<Eigen::Index>(fac.neighbors.size()));
  fac.f.resize(n);

  std::vector<std::string> errors(static_cast<std::size_t>(n));
  bool failed = false;

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 64)
#endif
  for (int i = 0; i < n; ++i) {
    try {
      const auto nb = graph.row(i);
      double fi;
      if (nb.empty()) {
        fi = op.entry(i, i);
      } else {
        const Matrix C = op.block(nb);
        const Vector c = op.cross_rows(i, nb);
        Eigen::LLT<Matrix> llt(C);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("factorize: conditioning matrix is not positive definite at ordered row " +
                                   std::to_string(i));
        const Vector a = llt.solve(c);
        for (Eigen::Index k = 0; k < a.size(); ++k)
          fac.weights(fac.offsets[static_cast<std::size_t>(i)] + k) = a(k);
        fi = op.entry(i, i) - c.dot(a);
      }
      if (!(fi > kMinConditionalVariance))
        throw std::runtime_error("factorize: conditional variance below tolerance at ordered row " +
                                 std::to_string(i) + " (near-duplicate locations?)");
      fac.f(i) = fi;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
      failed = true;
    }
  }
  if (failed)
    for (const auto& msg : errors)
      if (!msg.empty()) throw std::runtime_error(msg);
  return fac;
}

/// Quadratic form u^T K^-1 v under the factorization, in O(n m).
inline double qf(const Vector& u, const Vector& v, const SparseFactor& fac) {
  if (u.size() != fac.n() || v.size() != fac.n())
    throw std::invalid_argument("qf: vector length does not match factor size");
  double total = 0.0;
  for (int i = 0; i < fac.n(); ++i) {
    const auto nb = fac.row(i);
    const auto w = fac.row_weights(i);
    double ru = u(i), rv = v(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      ru -= w[k] * u(nb[k]);
      rv -= w[k] * v(nb[k]);
    }
    total += ru * rv / fac.f(i);
  }
  return total;
}

/// log det K under the factorization.
inline double log_det(const SparseFactor& fac) {
  double total = 0.0;
  for (int i = 0; i < fac.n(); ++i) total += std::log(fac.f(i));
  return total;
}

/// Whitened vector w with w_i = (x_i - a_i . x_{N(i)}) / sqrt(f_i), so that
/// whiten(u) . whiten(v) == qf(u, v).
inline Vector whiten(const Vector& x, const SparseFactor& fac) {
  if (x.size() != fac.n()) throw std::invalid_argument("whiten: vector length does not match factor size");
  Vector out(fac.n());
  for (int i = 0; i < fac.n(); ++i) {
    const auto nb = fac.row(i);
    const auto w = fac.row_weights(i);
    double r = x(i);
    for (std::size_t k = 0; k < nb.size(); ++k) r -= w[k] * x(nb[k]);
    out(i) = r / std::sqrt(fac.f(i));
  }
  return out;
}

/// Column-wise whitening of a design matrix; columns are independent, so the
/// loop parallelizes with deterministic output.
inline Matrix whiten_columns(const Matrix& X, const SparseFactor& fac) {
  Matrix out(X.rows(), X.cols());
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index j = 0; j < X.cols(); ++j) out.col(j) = whiten(X.col(j), fac);
  return out;
}

}  // namespace slgp
