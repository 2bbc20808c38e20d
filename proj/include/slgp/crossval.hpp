#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "slgp/core.hpp"
#include "slgp/model.hpp"

namespace slgp {

/// Root mean squared prediction error.
inline double rmspe(const Vector& predicted, const Vector& observed) {
  if (predicted.size() != observed.size())
    throw std::invalid_argument("rmspe: length mismatch");
  if (predicted.size() < 1) throw std::invalid_argument("rmspe: empty input");
  return std::sqrt((predicted - observed).squaredNorm() / static_cast<double>(predicted.size()));
}

/// Continuous ranked probability score of a normal predictive distribution,
/// closed form. Lower is better; reduces to |obs - mean| as variance -> 0.
inline double crps_gaussian(double mean, double variance, double obs) {
  if (!(variance > 0.0)) throw std::invalid_argument("crps_gaussian: variance must be positive");
  const double sd = std::sqrt(variance);
  const double z = (obs - mean) / sd;
  const double centered_cdf = std::erf(z / std::numbers::sqrt2);  // 2 Phi(z) - 1
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return sd * (z * centered_cdf + 2.0 * pdf - std::numbers::inv_sqrtpi);
}

/// Balanced fold labels: sizes differ by at most one, assignment is a seeded
/// shuffle of a round-robin labeling.
inline std::vector<int> kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: need at least two folds");
  if (n < k) throw std::invalid_argument("kfold_split: need at least one point per fold");
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % k;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
  }
  return labels;
}

enum class ScoreRule { Crps, Rmspe };

inline std::string to_string(ScoreRule s) { return s == ScoreRule::Crps ? "crps" : "rmspe"; }

inline ScoreRule score_rule_from_string(const std::string& s) {
  if (s == "crps") return ScoreRule::Crps;
  if (s == "rmspe") return ScoreRule::Rmspe;
  throw std::invalid_argument("unknown score rule: " + s);
}

/// Cross-validation setup: candidate grids over (alpha, phi) plus the shared
/// model structure. Grids are evaluated in ascending order after sorting.
struct CvConfig {
  std::vector<double> alphas;
  std::vector<double> phis;
  int k_folds = 5;
  int m = 15;
  int r_target = 0;
  double jitter = 1e-8;
  OrderingStrategy ordering = OrderingStrategy::FirstCoordinate;
  ScoreRule scoring = ScoreRule::Crps;
  std::uint64_t seed = 0;
  PriorSpec prior;
  std::vector<int> fold_labels;  // optional per-row fold assignment (original row
                                 // order, values 0..k_folds-1); overrides the
                                 // seeded random split when nonempty
};

/// Scores over the candidate grid, both rules always filled: fold-averaged
/// matrices over the grid plus the per-fold scores behind each average.
/// best_row / best_col index the selected (alpha, phi) under the configured
/// rule; ties resolve to the smaller alpha, then the smaller phi.
struct ScoreGrid {
  std::vector<double> alphas;  // ascending
  std::vector<double> phis;    // ascending
  Matrix crps;                 // alphas.size() x phis.size()
  Matrix rmspe;
  Matrix crps_folds;           // candidate x fold, candidate = alpha-major
  Matrix rmspe_folds;
  ScoreRule scoring = ScoreRule::Crps;
  int best_row = 0;
  int best_col = 0;

  int candidate_index(int ia, int ip) const {
    return ia * static_cast<int>(phis.size()) + ip;
  }
  double best_alpha() const { return alphas[static_cast<std::size_t>(best_row)]; }
  double best_phi() const { return phis[static_cast<std::size_t>(best_col)]; }
  const Matrix& scores() const { return scoring == ScoreRule::Crps ? crps : rmspe; }
};

inline std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("linspace: count must be positive");
  if (count == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
  return out;
}

namespace detail {

/// Per-fold training/holdout split with the geometry precomputed once; every
/// candidate reuses it.
struct FoldContext {
  std::vector<int> train_rows;  // positions in the ordered arrays, ascending
  std::vector<int> hold_rows;
  Matrix train_coords;
  Vector train_y;
  Matrix train_X;
  NeighborGraph graph;
  std::unique_ptr<NeighborQueryIndex> index;
};

}  // namespace detail

/// K-fold grid search. Structure shared by all candidates (ordering, fold
/// membership, neighbor geometry, knot locations) is computed once; each
/// candidate factorizes and fits per fold, scores its holdout, and the
/// candidate's score is the mean of the per-fold scores. Candidates are
/// independent, so the outer loop parallelizes with deterministic output.
inline ScoreGrid grid_search(const SpatialDataset& ds, const CvConfig& cfg) {
  if (cfg.alphas.empty() || cfg.phis.empty())
    throw std::invalid_argument("grid_search: empty candidate grid");
  for (double a : cfg.alphas)
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("grid_search: invalid alpha candidate");
  for (double p : cfg.phis)
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("grid_search: invalid phi candidate");
  if (cfg.m < 1) throw std::invalid_argument("grid_search: m must be positive");
  validate(cfg.prior);

  const int n = static_cast<int>(ds.n());
  ScoreGrid grid;
  grid.alphas = cfg.alphas;
  grid.phis = cfg.phis;
  std::sort(grid.alphas.begin(), grid.alphas.end());
  std::sort(grid.phis.begin(), grid.phis.end());
  const int na = static_cast<int>(grid.alphas.size());
  const int np = static_cast<int>(grid.phis.size());
  grid.crps.resize(na, np);
  grid.rmspe.resize(na, np);
  grid.crps_folds.resize(na * np, cfg.k_folds);
  grid.rmspe_folds.resize(na * np, cfg.k_folds);
  grid.scoring = cfg.scoring;

  // shared structure: ordering, folds, per-fold geometry
  const std::vector<int> perm = build_ordering(ds.coords(), cfg.ordering);
  const Matrix coords = permute_rows(ds.coords(), perm);
  const Vector y = permute(ds.y(), perm);
  const Matrix X = permute_rows(ds.X(), perm);
  std::vector<int> labels;
  if (!cfg.fold_labels.empty()) {
    if (cfg.k_folds < 2) throw std::invalid_argument("grid_search: k_folds must be at least 2");
    if (static_cast<int>(cfg.fold_labels.size()) != n)
      throw std::invalid_argument("grid_search: fold label count must match the data size");
    labels.resize(static_cast<std::size_t>(n));
    std::vector<int> counts(static_cast<std::size_t>(cfg.k_folds), 0);
    for (int i = 0; i < n; ++i) {
      const int lab = cfg.fold_labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      if (lab < 0 || lab >= cfg.k_folds)
        throw std::invalid_argument("grid_search: fold label out of range [0, k_folds)");
      labels[static_cast<std::size_t>(i)] = lab;
      ++counts[static_cast<std::size_t>(lab)];
    }
    for (int k = 0; k < cfg.k_folds; ++k)
      if (counts[static_cast<std::size_t>(k)] == 0)
        throw std::invalid_argument("grid_search: fold " + std::to_string(k) + " has no rows");
  } else {
    labels = kfold_split(n, cfg.k_folds, cfg.seed);
  }

  std::vector<detail::FoldContext> folds(static_cast<std::size_t>(cfg.k_folds));
  for (int k = 0; k < cfg.k_folds; ++k) {
    auto& fc = folds[static_cast<std::size_t>(k)];
    for (int i = 0; i < n; ++i)
      (labels[static_cast<std::size_t>(i)] == k ? fc.hold_rows : fc.train_rows).push_back(i);
    if (fc.train_rows.empty() || fc.hold_rows.empty())
      throw std::invalid_argument("grid_search: degenerate fold");
    fc.train_coords = permute_rows(coords, fc.train_rows);
    fc.train_y = permute(y, fc.train_rows);
    fc.train_X = permute_rows(X, fc.train_rows);
    fc.graph = neighbor_sets(fc.train_coords, cfg.m);
    fc.index = std::make_unique<NeighborQueryIndex>(fc.train_coords);
  }

  std::shared_ptr<const KnotSet> knots;
  if (cfg.r_target > 0) {
    auto ks = std::make_shared<KnotSet>(knot_grid(bounding_box(coords), cfg.r_target));
    if (ks->r() >= folds[0].train_coords.rows())
      throw std::invalid_argument("grid_search: realized knot count must stay below fold training size");
    knots = std::move(ks);
  }

  const int n_candidates = na * np;
  std::vector<std::string> errors(static_cast<std::size_t>(n_candidates));
  bool failed = false;

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
  for (int c = 0; c < n_candidates; ++c) {
    const int ia = c / np;
    const int ip = c % np;
    const double alpha = grid.alphas[static_cast<std::size_t>(ia)];
    const double phi = grid.phis[static_cast<std::size_t>(ip)];
    try {
      // candidate-level structure shared across folds
      std::shared_ptr<const ResidualCorrelation> rc;
      Matrix J_full;
      std::unique_ptr<SlgpResidualOperator> full_op;
      if (knots) {
        rc = std::make_shared<const ResidualCorrelation>(*knots, phi, cfg.jitter);
        J_full = build_J(coords, *rc);
        full_op = std::make_unique<SlgpResidualOperator>(coords, alpha, rc);
      }

      double crps_sum = 0.0, rmspe_sum = 0.0;
      for (int k = 0; k < cfg.k_folds; ++k) try {
        const auto& fc = folds[static_cast<std::size_t>(k)];
        AugmentedDesign design;
        ConjugateFit cfit;
        const auto score_fold = [&](const auto& op) {
          const SparseFactor fac = factorize(op, fc.graph);
          cfit = fit_conjugate(fc.train_y, design, fac, cfg.prior);
          double crps_total = 0.0, sq_total = 0.0;
          for (int h : fc.hold_rows) {
            const PredictiveDistribution pd =
                predict_one(Point(coords(h, 0), coords(h, 1)), Vector(X.row(h).transpose()), op,
                            fc.train_y, design, cfit, cfg.m, fc.index.get());
            crps_total += crps_gaussian(pd.mean, pd.variance, y(h));
            const double err = pd.mean - y(h);
            sq_total += err * err;
          }
          const auto nh = static_cast<double>(fc.hold_rows.size());
          grid.crps_folds(c, k) = crps_total / nh;
          grid.rmspe_folds(c, k) = std::sqrt(sq_total / nh);
          crps_sum += grid.crps_folds(c, k);
          rmspe_sum += grid.rmspe_folds(c, k);
        };
        if (knots) {
          const Matrix J_fold = permute_rows(J_full, fc.train_rows);
          design = augment_design(fc.train_X, &J_fold, rc.get(), cfg.prior);
          score_fold(full_op->subset(fc.train_rows));
        } else {
          design = augment_design(fc.train_X, nullptr, nullptr, cfg.prior);
          score_fold(MarginalOperator(fc.train_coords, phi, alpha));
        }
      } catch (const std::exception& e) {
        throw std::runtime_error("fold " + std::to_string(k) + ": " + e.what());
      }
      grid.crps(ia, ip) = crps_sum / cfg.k_folds;
      grid.rmspe(ia, ip) = rmspe_sum / cfg.k_folds;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(c)] =
          "candidate (alpha=" + std::to_string(alpha) + ", phi=" + std::to_string(phi) + "): " + e.what();
      failed = true;
    }
  }
  if (failed)
    for (const auto& msg : errors)
      if (!msg.empty()) throw std::runtime_error(msg);

  // ascending scan + strict improvement = ties resolve to smaller alpha,
  // then smaller phi
  const Matrix& s = grid.scores();
  grid.best_row = 0;
  grid.best_col = 0;
  for (int ia = 0; ia < na; ++ia)
    for (int ip = 0; ip < np; ++ip)
      if (s(ia, ip) < s(grid.best_row, grid.best_col)) {
        grid.best_row = ia;
        grid.best_col = ip;
      }
  return grid;
}

}  // namespace slgp
