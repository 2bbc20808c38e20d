#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slgp/core.hpp"

namespace slgp {

/// Point-referenced data: n locations in the plane, an outcome per location,
/// and an n x p design matrix (first column all ones by convention).
/// Coordinates must be pairwise distinct; duplicates make the nearest-neighbor
/// conditioning matrices singular, so they are rejected at construction.
class SpatialDataset {
 public:
  SpatialDataset(Matrix coords, Vector y, Matrix X)
      : coords_(std::move(coords)), y_(std::move(y)), X_(std::move(X)) {
    const auto n = coords_.rows();
    if (n < 1) throw std::invalid_argument("SpatialDataset: need at least one location");
    if (coords_.cols() != 2) throw std::invalid_argument("SpatialDataset: coords must be n x 2");
    if (y_.size() != n) throw std::invalid_argument("SpatialDataset: outcome length does not match coords");
    if (X_.rows() != n) throw std::invalid_argument("SpatialDataset: design rows do not match coords");
    if (X_.cols() < 1) throw std::invalid_argument("SpatialDataset: design needs at least one column");
    if (!coords_.allFinite() || !y_.allFinite() || !X_.allFinite())
      throw std::invalid_argument("SpatialDataset: non-finite value in input");
    check_distinct();
  }

  Eigen::Index n() const { return coords_.rows(); }
  Eigen::Index p() const { return X_.cols(); }
  const Matrix& coords() const { return coords_; }
  const Vector& y() const { return y_; }
  const Matrix& X() const { return X_; }
  Point point(Eigen::Index i) const { return coords_.row(i).transpose(); }

 private:
  void check_distinct() const {
    std::vector<int> idx(static_cast<std::size_t>(coords_.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (coords_(a, 0) != coords_(b, 0)) return coords_(a, 0) < coords_(b, 0);
      return coords_(a, 1) < coords_(b, 1);
    });
    for (std::size_t k = 1; k < idx.size(); ++k) {
      const int a = idx[k - 1], b = idx[k];
      if (coords_(a, 0) == coords_(b, 0) && coords_(a, 1) == coords_(b, 1))
        throw std::invalid_argument("SpatialDataset: duplicate coordinates at rows " +
                                    std::to_string(std::min(a, b)) + " and " +
                                    std::to_string(std::max(a, b)));
    }
  }

  Matrix coords_;
  Vector y_;
  Matrix X_;
};

/// Collapse exact-duplicate coordinates by averaging their outcomes and
/// covariate rows. Row order of first occurrence is preserved.
inline SpatialDataset deduplicate_by_mean(const Matrix& coords, const Vector& y, const Matrix& X) {
  const auto n = coords.rows();
  if (n < 1) throw std::invalid_argument("deduplicate_by_mean: empty input");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (coords(a, 0) != coords(b, 0)) return coords(a, 0) < coords(b, 0);
    if (coords(a, 1) != coords(b, 1)) return coords(a, 1) < coords(b, 1);
    return a < b;
  });

  // group[i] = index of the first row sharing row i's coordinates
  std::vector<int> group(static_cast<std::size_t>(n));
  group[static_cast<std::size_t>(idx[0])] = idx[0];
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const int prev = idx[k - 1], cur = idx[k];
    const bool same = coords(prev, 0) == coords(cur, 0) && coords(prev, 1) == coords(cur, 1);
    group[static_cast<std::size_t>(cur)] =
        same ? group[static_cast<std::size_t>(prev)] : cur;
  }
  // leaders keep first-occurrence order; group leader may appear after a
  // member in the sorted pass, so normalize to the minimum original index
  std::vector<int> leader(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    int g = group[static_cast<std::size_t>(i)];
    int& l = leader[static_cast<std::size_t>(g)];
    if (l < 0 || i < l) l = i;
  }
  std::vector<int> keep;
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int l = leader[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    if (l == i) keep.push_back(i);
    ++count[static_cast<std::size_t>(l)];
  }

  Matrix out_coords(static_cast<Eigen::Index>(keep.size()), 2);
  Vector out_y = Vector::Zero(static_cast<Eigen::Index>(keep.size()));
  Matrix out_X = Matrix::Zero(static_cast<Eigen::Index>(keep.size()), X.cols());
  std::vector<int> slot(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    slot[static_cast<std::size_t>(keep[k])] = static_cast<int>(k);
    out_coords.row(static_cast<Eigen::Index>(k)) = coords.row(keep[k]);
  }
  for (int i = 0; i < n; ++i) {
    const int l = leader[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    const int s = slot[static_cast<std::size_t>(l)];
    const double w = 1.0 / count[static_cast<std::size_t>(l)];
    out_y(s) += w * y(i);
    out_X.row(s) += w * X.row(i);
  }
  return SpatialDataset(std::move(out_coords), std::move(out_y), std::move(out_X));
}

enum class OrderingStrategy { FirstCoordinate, CoordinateSum };

inline std::string to_string(OrderingStrategy s) {
  return s == OrderingStrategy::FirstCoordinate ? "first-coordinate" : "coordinate-sum";
}

inline OrderingStrategy ordering_from_string(const std::string& s) {
  if (s == "first-coordinate") return OrderingStrategy::FirstCoordinate;
  if (s == "coordinate-sum") return OrderingStrategy::CoordinateSum;
  throw std::invalid_argument("unknown ordering strategy: " + s);
}

/// Permutation that sorts locations by the ordering key (ties by original
/// index). Applying it makes the key nondecreasing, which the neighbor search
/// later exploits to prune its backward scan.
inline std::vector<int> build_ordering(const Matrix& coords, OrderingStrategy strategy) {
  const auto n = coords.rows();
  if (n < 1) throw std::invalid_argument("build_ordering: empty coords");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  const bool sum = strategy == OrderingStrategy::CoordinateSum;
  std::sort(perm.begin(), perm.end(), [&](int a, int b) {
    const double ka = sum ? coords(a, 0) + coords(a, 1) : coords(a, 0);
    const double kb = sum ? coords(b, 0) + coords(b, 1) : coords(b, 0);
    if (ka != kb) return ka < kb;
    return a < b;
  });
  return perm;
}

inline Matrix permute_rows(const Matrix& M, const std::vector<int>& perm) {
  Matrix out(static_cast<Eigen::Index>(perm.size()), M.cols());
  for (std::size_t k = 0; k < perm.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = M.row(perm[k]);
  return out;
}

inline Vector permute(const Vector& v, const std::vector<int>& perm) {
  Vector out(static_cast<Eigen::Index>(perm.size()));
  for (std::size_t k = 0; k < perm.size(); ++k)
    out(static_cast<Eigen::Index>(k)) = v(perm[k]);
  return out;
}

/// Directed nearest-neighbor sets over an ordered location list, in compressed
/// row layout: row i's neighbors are neighbors[offsets[i] .. offsets[i+1]),
/// each a set of min(i, m) predecessors, stored ascending by index.
struct NeighborGraph {
  int m = 0;
  std::vector<int> offsets;
  std::vector<int> neighbors;

  int n() const { return static_cast<int>(offsets.size()) - 1; }
  std::span<const int> row(int i) const {
    return {neighbors.data() + offsets[static_cast<std::size_t>(i)],
            neighbors.data() + offsets[static_cast<std::size_t>(i) + 1]};
  }
};

namespace detail {

struct Candidate {
  double d2;
  int index;
};

// "better" = strictly smaller distance, ties to the lower index
inline bool better(const Candidate& a, const Candidate& b) {
  if (a.d2 != b.d2) return a.d2 < b.d2;
  return a.index < b.index;
}

/// Fixed-capacity worst-on-top heap used to keep the m best candidates seen.
class BestSet {
 public:
  explicit BestSet(int capacity) : capacity_(capacity) { heap_.reserve(static_cast<std::size_t>(capacity)); }

  bool full() const { return static_cast<int>(heap_.size()) == capacity_; }
  double worst_d2() const { return heap_.front().d2; }

  void offer(double d2, int index) {
    const Candidate c{d2, index};
    if (!full()) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), better);
      return;
    }
    if (better(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), better);
    }
  }

  /// True once a candidate with squared distance bound d2_bound (and any
  /// index) can no longer displace a member.
  bool saturated_at(double d2_bound) const { return full() && d2_bound > worst_d2(); }

  std::vector<int> sorted_indices() const {
    std::vector<int> out;
    out.reserve(heap_.size());
    for (const auto& c : heap_) out.push_back(c.index);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  int capacity_;
  std::vector<Candidate> heap_;
};

inline void check_distinct_coords(const Matrix& coords, const char* who) {
  const auto n = coords.rows();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (coords(a, 0) != coords(b, 0)) return coords(a, 0) < coords(b, 0);
    return coords(a, 1) < coords(b, 1);
  });
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const int a = idx[k - 1], b = idx[k];
    if (coords(a, 0) == coords(b, 0) && coords(a, 1) == coords(b, 1))
      throw std::invalid_argument(std::string(who) + ": duplicate coordinates at rows " +
                                  std::to_string(std::min(a, b)) + " and " +
                                  std::to_string(std::max(a, b)));
  }
}

}  // namespace detail

/// Build the directed m-nearest-predecessor graph over ordered coords.
///
/// When the ordering key (first coordinate, or coordinate sum) is
/// nondecreasing along the rows, the backward scan for row i stops as soon as
/// the key gap alone rules out every remaining predecessor: the key is
/// L-Lipschitz in position (L = 1 for x, sqrt(2) for x + y), so
/// dist >= key_gap / L. That keeps the build near O(n m) on ordered inputs
/// instead of O(n^2). Unordered inputs fall back to the full scan and the
/// result is identical either way.
inline NeighborGraph neighbor_sets(const Matrix& coords, int m) {
  const auto n = coords.rows();
  if (n < 1) throw std::invalid_argument("neighbor_sets: empty coords");
  if (m < 0) throw std::invalid_argument("neighbor_sets: m must be nonnegative");
  detail::check_distinct_coords(coords, "neighbor_sets");

  NeighborGraph g;
  g.m = m;
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    g.offsets[static_cast<std::size_t>(i) + 1] =
        g.offsets[static_cast<std::size_t>(i)] + static_cast<int>(std::min<Eigen::Index>(i, m));
  g.neighbors.assign(static_cast<std::size_t>(g.offsets.back()), -1);
  if (m == 0 || n == 1) return g;

  // pick the tightest Lipschitz constant for which the row key is monotone
  std::vector<double> key(static_cast<std::size_t>(n));
  double inv_L2 = 0.0;  // 0 disables pruning
  for (int pass = 0; pass < 2 && inv_L2 == 0.0; ++pass) {
    const bool sum = pass == 1;
    bool monotone = true;
    for (Eigen::Index i = 0; i < n; ++i) key[static_cast<std::size_t>(i)] = sum ? coords(i, 0) + coords(i, 1) : coords(i, 0);
    for (Eigen::Index i = 1; i < n && monotone; ++i)
      monotone = key[static_cast<std::size_t>(i)] >= key[static_cast<std::size_t>(i) - 1];
    if (monotone) inv_L2 = sum ? 0.5 : 1.0;  // dist^2 >= inv_L2 * gap^2
  }

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 64)
#endif
  for (Eigen::Index i = 1; i < n; ++i) {
    const int want = static_cast<int>(std::min<Eigen::Index>(i, m));
    detail::BestSet best(want);
    const Point pi = coords.row(i).transpose();
    for (Eigen::Index j = i - 1; j >= 0; --j) {
      if (inv_L2 > 0.0 && best.full()) {
        const double gap = key[static_cast<std::size_t>(i)] - key[static_cast<std::size_t>(j)];
        if (inv_L2 * gap * gap > best.worst_d2()) break;  // all remaining rows are farther
      }
      const Point pj = coords.row(j).transpose();
      best.offer(squared_dist(pi, pj), static_cast<int>(j));
    }
    const auto sorted = best.sorted_indices();
    std::copy(sorted.begin(), sorted.end(),
              g.neighbors.begin() + g.offsets[static_cast<std::size_t>(i)]);
  }
  return g;
}

/// Indices of the min(m, n_ref) reference locations nearest to s, ascending.
/// Ties in distance resolve to the lower index.
inline std::vector<int> predict_neighbors(const Point& s, const Matrix& ref_coords, int m) {
  const auto n = ref_coords.rows();
  if (n < 1) throw std::invalid_argument("predict_neighbors: empty reference set");
  if (m < 1) throw std::invalid_argument("predict_neighbors: m must be positive");
  detail::BestSet best(static_cast<int>(std::min<Eigen::Index>(m, n)));
  for (Eigen::Index j = 0; j < n; ++j)
    best.offer(squared_dist(s, ref_coords.row(j).transpose()), static_cast<int>(j));
  return best.sorted_indices();
}

/// Reference index for repeated nearest-neighbor queries against a fixed
/// location set. Queries expand outward from the query's rank in the
/// x-sorted order and prune each direction once the x gap alone exceeds the
/// current worst distance, so results match predict_neighbors exactly.
class NeighborQueryIndex {
 public:
  explicit NeighborQueryIndex(const Matrix& ref_coords) : coords_(&ref_coords) {
    const auto n = ref_coords.rows();
    if (n < 1) throw std::invalid_argument("NeighborQueryIndex: empty reference set");
    by_x_.resize(static_cast<std::size_t>(n));
    std::iota(by_x_.begin(), by_x_.end(), 0);
    std::sort(by_x_.begin(), by_x_.end(), [&](int a, int b) {
      if (ref_coords(a, 0) != ref_coords(b, 0)) return ref_coords(a, 0) < ref_coords(b, 0);
      return a < b;
    });
    xs_.resize(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < by_x_.size(); ++k) xs_[k] = ref_coords(by_x_[k], 0);
  }

  std::vector<int> query(const Point& s, int m) const {
    const auto n = static_cast<int>(by_x_.size());
    if (m < 1) throw std::invalid_argument("NeighborQueryIndex: m must be positive");
    detail::BestSet best(std::min(m, n));
    // first x-rank at or above the query point
    int hi = static_cast<int>(std::lower_bound(xs_.begin(), xs_.end(), s.x()) - xs_.begin());
    int lo = hi - 1;
    bool lo_open = true, hi_open = true;
    while (lo_open || hi_open) {
      if (lo_open && (lo < 0 || (best.full() && gap2(lo, s) > best.worst_d2()))) lo_open = false;
      if (hi_open && (hi >= n || (best.full() && gap2(hi, s) > best.worst_d2()))) hi_open = false;
      // prefer the side with the smaller x gap; offer() resolves exact ties
      const double glo = lo_open ? gap2(lo, s) : 0.0;
      const double ghi = hi_open ? gap2(hi, s) : 0.0;
      if (lo_open && (!hi_open || glo <= ghi)) {
        const int j = by_x_[static_cast<std::size_t>(lo)];
        best.offer(squared_dist(s, coords_->row(j).transpose()), j);
        --lo;
      } else if (hi_open) {
        const int j = by_x_[static_cast<std::size_t>(hi)];
        best.offer(squared_dist(s, coords_->row(j).transpose()), j);
        ++hi;
      }
    }
    return best.sorted_indices();
  }

 private:
  double gap2(int rank, const Point& s) const {
    const double g = xs_[static_cast<std::size_t>(rank)] - s.x();
    return g * g;
  }

  const Matrix* coords_;
  std::vector<int> by_x_;
  std::vector<double> xs_;
};

struct BoundingBox {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
};

inline BoundingBox bounding_box(const Matrix& coords) {
  if (coords.rows() < 1) throw std::invalid_argument("bounding_box: empty coords");
  BoundingBox b;
  b.min_x = coords.col(0).minCoeff();
  b.max_x = coords.col(0).maxCoeff();
  b.min_y = coords.col(1).minCoeff();
  b.max_y = coords.col(1).maxCoeff();
  return b;
}

/// Knot locations for the low-rank component: a g x g grid of cell centers,
/// g = round(sqrt(r_target)), covering the bounding box. Realized count is
/// g^2, which may differ from r_target.
struct KnotSet {
  Matrix coords;  // r x 2, x-major then y within each column of cells

  Eigen::Index r() const { return coords.rows(); }
  Point point(Eigen::Index k) const { return coords.row(k).transpose(); }
};

inline KnotSet knot_grid(const BoundingBox& box, int r_target) {
  if (r_target < 1) throw std::invalid_argument("knot_grid: r_target must be positive");
  if (!(box.max_x > box.min_x) || !(box.max_y > box.min_y))
    throw std::invalid_argument("knot_grid: bounding box is degenerate");
  const int g = std::max(1, static_cast<int>(std::llround(std::sqrt(static_cast<double>(r_target)))));
  KnotSet ks;
  ks.coords.resize(static_cast<Eigen::Index>(g) * g, 2);
  const double wx = (box.max_x - box.min_x) / g;
  const double wy = (box.max_y - box.min_y) / g;
  Eigen::Index row = 0;
  for (int ix = 0; ix < g; ++ix)
    for (int iy = 0; iy < g; ++iy, ++row) {
      ks.coords(row, 0) = box.min_x + (ix + 0.5) * wx;
      ks.coords(row, 1) = box.min_y + (iy + 0.5) * wy;
    }
  return ks;
}

}  // namespace slgp
