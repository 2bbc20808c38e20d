#pragma once

#include <algorithm>
#include <initializer_list>
#include <utility>
#include <vector>

#include "slgp/core.hpp"
#include "slgp/geometry.hpp"
#include "slgp/nngp.hpp"

namespace testutil {

inline slgp::Matrix make_coords(std::initializer_list<std::pair<double, double>> pts) {
  slgp::Matrix m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [x, y] : pts) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

inline slgp::Vector make_vector(std::initializer_list<double> vals) {
  slgp::Vector v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v(i++) = x;
  return v;
}

inline slgp::Matrix random_coords(int n, std::uint64_t seed, double scale = 1.0) {
  slgp::Rng rng(seed);
  slgp::Matrix m(n, 2);
  for (int i = 0; i < n; ++i) {
    m(i, 0) = scale * rng.uniform();
    m(i, 1) = scale * rng.uniform();
  }
  return m;
}

inline slgp::Matrix sorted_by_x(slgp::Matrix coords) {
  const auto perm = slgp::build_ordering(coords, slgp::OrderingStrategy::FirstCoordinate);
  return slgp::permute_rows(coords, perm);
}

/// Exhaustive reference for the directed nearest-neighbor sets: all
/// predecessor distances, full sort, ties by lower index.
inline std::vector<int> brute_preceding_neighbors(const slgp::Matrix& coords, int i, int m) {
  std::vector<std::pair<double, int>> all;
  const slgp::Point pi = coords.row(i).transpose();
  for (int j = 0; j < i; ++j)
    all.emplace_back(slgp::squared_dist(pi, coords.row(j).transpose()), j);
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int k = 0; k < std::min<int>(m, static_cast<int>(all.size())); ++k)
    out.push_back(all[static_cast<std::size_t>(k)].second);
  std::sort(out.begin(), out.end());
  return out;
}

/// Exhaustive reference for nearest reference locations to a free point.
inline std::vector<int> brute_nearest(const slgp::Point& s, const slgp::Matrix& refs, int m) {
  std::vector<std::pair<double, int>> all;
  for (int j = 0; j < refs.rows(); ++j)
    all.emplace_back(slgp::squared_dist(s, refs.row(j).transpose()), j);
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int k = 0; k < std::min<int>(m, static_cast<int>(all.size())); ++k)
    out.push_back(all[static_cast<std::size_t>(k)].second);
  std::sort(out.begin(), out.end());
  return out;
}

/// Densify the implied covariance from a sparse factor:
/// K = (I - A)^-1 F (I - A)^-T.
inline slgp::Matrix dense_from_factor(const slgp::SparseFactor& fac) {
  const int n = fac.n();
  slgp::Matrix ImA = slgp::Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    const auto nb = fac.row(i);
    const auto w = fac.row_weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) ImA(i, nb[k]) = -w[k];
  }
  const slgp::Matrix inv = ImA.inverse();
  return inv * fac.f.asDiagonal() * inv.transpose();
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

inline double rel_err(const slgp::Matrix& got, const slgp::Matrix& want) {
  return (got - want).norm() / std::max(1e-300, want.norm());
}

inline double rel_err(const slgp::Vector& got, const slgp::Vector& want) {
  return (got - want).norm() / std::max(1e-300, want.norm());
}

}  // namespace testutil
