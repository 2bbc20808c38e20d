#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "slgp/conjugate.hpp"
#include "slgp/core.hpp"
#include "slgp/covariance.hpp"
#include "slgp/geometry.hpp"
#include "slgp/nngp.hpp"
#include "slgp/predict.hpp"

namespace slgp {

/// Everything needed to fit one model end to end. r_target = 0 selects the
/// nearest-neighbor marginal; positive values add the low-rank knot
/// component with knots on a grid over the training bounding box.
struct ModelConfig {
  CovarianceSpec cov;
  int m = 15;
  int r_target = 0;
  double jitter = 1e-8;
  OrderingStrategy ordering = OrderingStrategy::FirstCoordinate;
  PriorSpec prior;
};

inline void validate(const ModelConfig& cfg) {
  validate(cfg.cov);
  validate(cfg.prior);
  if (cfg.m < 1) throw std::invalid_argument("ModelConfig: m must be positive");
  if (cfg.r_target < 0) throw std::invalid_argument("ModelConfig: r_target must be nonnegative");
  if (!(cfg.jitter >= 0.0)) throw std::invalid_argument("ModelConfig: jitter must be nonnegative");
}

/// A fitted model: training data in conditioning order, the correlation
/// operator over it, the augmented design, and the conjugate posterior.
struct FittedModel {
  ModelConfig config;
  std::vector<int> order;  // position -> original row of the training input
  Vector y;                // ordered outcome
  std::variant<std::monostate, MarginalOperator, SlgpResidualOperator> op;
  AugmentedDesign design;
  ConjugateFit fit;
  bool sqrt_outcome = false;

  /// Apply f to whichever operator the model holds.
  template <typename F>
  decltype(auto) with_op(F&& f) const {
    if (const auto* a = std::get_if<MarginalOperator>(&op)) return f(*a);
    if (const auto* b = std::get_if<SlgpResidualOperator>(&op)) return f(*b);
    throw std::logic_error("FittedModel: model holds no operator");
  }

  const Matrix& coords() const {
    return with_op([](const auto& o) -> const Matrix& { return o.coords(); });
  }

  Eigen::Index r() const { return design.r; }
  Eigen::Index p() const { return design.p; }

  PredictiveDistribution predict_at(const Point& s, const Vector& x_row,
                                    const NeighborQueryIndex* index = nullptr) const {
    return with_op(
        [&](const auto& o) { return predict_one(s, x_row, o, y, design, fit, config.m, index); });
  }

  std::vector<PredictiveDistribution> predict(const Matrix& locations, const Matrix& X0) const {
    return with_op(
        [&](const auto& o) { return predict_batch(locations, X0, o, y, design, fit, config.m); });
  }
};

/// Fit the model: order the locations, build the neighbor graph, factorize
/// the working correlation, and run the conjugate update.
inline FittedModel fit_model(const SpatialDataset& ds, const ModelConfig& cfg) {
  validate(cfg);
  const auto n = ds.n();

  FittedModel model;
  model.config = cfg;
  model.order = build_ordering(ds.coords(), cfg.ordering);
  Matrix coords = permute_rows(ds.coords(), model.order);
  model.y = permute(ds.y(), model.order);
  Matrix X = permute_rows(ds.X(), model.order);

  const NeighborGraph graph = neighbor_sets(coords, cfg.m);

  if (cfg.r_target > 0) {
    const KnotSet knots = knot_grid(bounding_box(coords), cfg.r_target);
    if (knots.r() >= n)
      throw std::invalid_argument("fit_model: realized knot count must stay below n");
    auto rc = std::make_shared<const ResidualCorrelation>(knots, cfg.cov.phi, cfg.jitter);
    const Matrix J = build_J(coords, *rc);
    model.design = augment_design(X, &J, rc.get(), cfg.prior);
    SlgpResidualOperator op(std::move(coords), cfg.cov.alpha, rc);
    const SparseFactor fac = factorize(op, graph);
    model.fit = fit_conjugate(model.y, model.design, fac, cfg.prior);
    model.op = std::move(op);
  } else {
    model.design = augment_design(X, nullptr, nullptr, cfg.prior);
    MarginalOperator op(std::move(coords), cfg.cov.phi, cfg.cov.alpha);
    const SparseFactor fac = factorize(op, graph);
    model.fit = fit_conjugate(model.y, model.design, fac, cfg.prior);
    model.op = std::move(op);
  }
  return model;
}

}  // namespace slgp
