#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "helpers.hpp"
#include "slgp/crossval.hpp"
#include "slgp/simulate.hpp"

using namespace slgp;
using namespace testutil;
using Catch::Matchers::Contains;

namespace {

SpatialDataset cv_dataset(int n, std::uint64_t seed) {
  GeneratorSpec gen;
  gen.n = n;
  gen.tau2 = 0.4;
  gen.beta = make_vector({1.0, 2.0});
  gen.seed = seed;
  return simulate_gp(gen);
}

std::vector<int> fold_sizes(const std::vector<int>& labels, int k) {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int lab : labels) ++sizes[static_cast<std::size_t>(lab)];
  return sizes;
}

}  // namespace

TEST_CASE("kfold_split balances folds and is seed-deterministic") {
  const auto labels = kfold_split(10, 5, 42);
  REQUIRE(labels.size() == 10);
  for (int lab : labels) {
    CHECK(lab >= 0);
    CHECK(lab < 5);
  }
  CHECK(fold_sizes(labels, 5) == std::vector<int>{2, 2, 2, 2, 2});

  CHECK(kfold_split(10, 5, 42) == labels);
  CHECK(kfold_split(10, 5, 43) != labels);
}

TEST_CASE("kfold_split sizes never differ by more than one") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto sizes = fold_sizes(kfold_split(103, 5, seed), 5);
    std::sort(sizes.begin(), sizes.end());
    REQUIRE(sizes == std::vector<int>{20, 20, 21, 21, 21});
  }
}

TEST_CASE("kfold_split rejects impossible splits") {
  CHECK_THROWS_WITH(kfold_split(4, 5, 0), Contains("at least one point per fold"));
  CHECK_THROWS_WITH(kfold_split(10, 1, 0), Contains("at least two folds"));
}

TEST_CASE("rmspe closed forms") {
  const Vector v = make_vector({1.0, -2.0, 0.5});
  CHECK(rmspe(v, v) == 0.0);
  CHECK(rmspe(make_vector({3.0}), make_vector({1.0})) == 2.0);
  // offsets 3 and 4 over two points: sqrt((9 + 16) / 2)
  CHECK(rmspe(make_vector({0.0, 0.0}), make_vector({3.0, 4.0})) == 3.53553390593273762);
  CHECK_THROWS_WITH(rmspe(v, make_vector({1.0})), Contains("length mismatch"));
  CHECK_THROWS_WITH(rmspe(Vector(), Vector()), Contains("empty"));
}

TEST_CASE("gaussian crps closed form matches frozen reference values") {
  // frozen from a high-precision evaluation of sigma [z erf(z/sqrt 2)
  // + 2 phi(z) - 1/sqrt pi]
  CHECK(rel_err(crps_gaussian(0.0, 1.0, 0.0), 0.23369497725510907) < 1e-14);
  CHECK(rel_err(crps_gaussian(0.0, 1.0, 1.5), 0.99442400397745297) < 1e-14);
  CHECK(rel_err(crps_gaussian(2.0, 0.25, 1.0), 0.72639591084295149) < 1e-14);
}

TEST_CASE("gaussian crps limits, symmetry, and positivity") {
  CHECK(std::abs(crps_gaussian(0.0, 1e-16, 0.3) - 0.3) < 1e-6);
  for (double d : {0.1, 0.7, 2.5}) {
    CHECK(rel_err(crps_gaussian(1.0, 0.8, 1.0 + d), crps_gaussian(1.0, 0.8, 1.0 - d)) < 1e-14);
  }
  for (double obs : {-4.0, -1.0, 0.0, 0.3, 2.0, 6.0}) {
    CHECK(crps_gaussian(0.5, 1.3, obs) >= 0.0);
  }
  CHECK_THROWS_WITH(crps_gaussian(0.0, 0.0, 1.0), Contains("variance must be positive"));
  CHECK_THROWS_WITH(crps_gaussian(0.0, -1.0, 1.0), Contains("variance must be positive"));
}

TEST_CASE("linspace spans the bounds inclusively") {
  const auto g = linspace(0.1, 1.9, 5);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 0.1);
  CHECK(g.back() == 1.9);
  CHECK(rel_err(g[1], 0.55) < 1e-14);
  CHECK(rel_err(g[2], 1.0) < 1e-14);
  CHECK(rel_err(g[3], 1.45) < 1e-14);
  CHECK(linspace(2.0, 5.0, 1) == std::vector<double>{2.0});
  CHECK_THROWS_WITH(linspace(0.0, 1.0, 0), Contains("count must be positive"));
}

TEST_CASE("a single candidate is selected and its average is the fold mean") {
  const SpatialDataset ds = cv_dataset(60, 401);
  CvConfig cfg;
  cfg.alphas = {0.3};
  cfg.phis = {5.0};
  cfg.k_folds = 3;
  cfg.m = 5;
  cfg.seed = 2;

  const ScoreGrid grid = grid_search(ds, cfg);
  CHECK(grid.best_alpha() == 0.3);
  CHECK(grid.best_phi() == 5.0);
  REQUIRE(grid.crps.rows() == 1);
  REQUIRE(grid.crps_folds.rows() == 1);
  REQUIRE(grid.crps_folds.cols() == 3);

  double forward = 0.0, backward = 0.0;
  for (int k = 0; k < 3; ++k) forward += grid.crps_folds(0, k);
  for (int k = 2; k >= 0; --k) backward += grid.crps_folds(0, k);
  CHECK(grid.crps(0, 0) == forward / 3);
  CHECK(rel_err(grid.crps(0, 0), backward / 3) < 1e-14);

  double rm = 0.0;
  for (int k = 0; k < 3; ++k) rm += grid.rmspe_folds(0, k);
  CHECK(grid.rmspe(0, 0) == rm / 3);
}

TEST_CASE("duplicated candidates do not change the selection") {
  const SpatialDataset ds = cv_dataset(80, 411);
  CvConfig cfg;
  cfg.alphas = {0.5, 1.0};
  cfg.phis = {4.0, 8.0};
  cfg.k_folds = 4;
  cfg.m = 5;
  cfg.seed = 3;
  const ScoreGrid base = grid_search(ds, cfg);

  CvConfig doubled = cfg;
  doubled.alphas = {1.0, 0.5, 0.5};
  doubled.phis = {8.0, 4.0, 4.0};
  const ScoreGrid dup = grid_search(ds, doubled);
  CHECK(dup.alphas == std::vector<double>{0.5, 0.5, 1.0});
  CHECK(dup.phis == std::vector<double>{4.0, 4.0, 8.0});
  CHECK(dup.best_alpha() == base.best_alpha());
  CHECK(dup.best_phi() == base.best_phi());
}

TEST_CASE("grid_search validates its configuration") {
  const SpatialDataset ds = cv_dataset(30, 421);
  CvConfig cfg;
  cfg.alphas = {0.5};
  cfg.phis = {4.0};
  cfg.k_folds = 2;
  cfg.m = 3;

  CvConfig bad = cfg;
  bad.alphas.clear();
  CHECK_THROWS_WITH(grid_search(ds, bad), Contains("empty candidate grid"));
  bad = cfg;
  bad.alphas = {-0.1};
  CHECK_THROWS_WITH(grid_search(ds, bad), Contains("invalid alpha"));
  bad = cfg;
  bad.phis = {0.0};
  CHECK_THROWS_WITH(grid_search(ds, bad), Contains("invalid phi"));
  bad = cfg;
  bad.m = 0;
  CHECK_THROWS_WITH(grid_search(ds, bad), Contains("m must be positive"));
}

TEST_CASE("fold fit failures name the candidate and the fold") {
  // a pair of locations 1e-14 apart is pairwise-distinct but, with a zero
  // nugget, leaves no conditional variance once one conditions on the other;
  // with three folds some training set always contains both
  Matrix coords = random_coords(18, 431);
  Matrix with_dup(20, 2);
  with_dup.topRows(18) = coords;
  with_dup.row(18) << 0.3, 0.4;
  with_dup.row(19) << 0.3 + 1e-14, 0.4;
  Rng rng(432);
  Vector y(20);
  for (int i = 0; i < 20; ++i) y(i) = rng.normal();
  const SpatialDataset ds(with_dup, y, Matrix::Ones(20, 1));

  CvConfig cfg;
  cfg.alphas = {0.0};
  cfg.phis = {1.0};
  cfg.k_folds = 3;
  cfg.m = 2;
  cfg.seed = 5;
  CHECK_THROWS_WITH(grid_search(ds, cfg),
                    Contains("candidate (alpha=0.000000") && Contains("fold") &&
                        Contains("conditional variance"));
}

TEST_CASE("fold training sub-operators equal operators rebuilt from the fold data") {
  const Matrix coords = random_coords(100, 441);
  const auto labels = kfold_split(100, 5, 9);
  const double alpha = 0.3, phi = 6.0;
  const KnotSet knots = knot_grid(bounding_box(coords), 9);
  auto rc = std::make_shared<const ResidualCorrelation>(knots, phi);
  const MarginalOperator full_marginal(coords, phi, alpha);
  const SlgpResidualOperator full_residual(coords, alpha, rc);

  for (int k = 0; k < 5; ++k) {
    std::vector<int> train_rows;
    for (int i = 0; i < 100; ++i)
      if (labels[static_cast<std::size_t>(i)] != k) train_rows.push_back(i);
    const Matrix train_coords = permute_rows(coords, train_rows);
    const NeighborGraph graph = neighbor_sets(train_coords, 6);

    const SparseFactor a = factorize(full_marginal.subset(train_rows), graph);
    const SparseFactor b = factorize(MarginalOperator(train_coords, phi, alpha), graph);
    REQUIRE(a.weights.size() == b.weights.size());
    CHECK(std::memcmp(a.weights.data(), b.weights.data(),
                      sizeof(double) * static_cast<std::size_t>(a.weights.size())) == 0);
    CHECK(std::memcmp(a.f.data(), b.f.data(),
                      sizeof(double) * static_cast<std::size_t>(a.f.size())) == 0);

    const SparseFactor c = factorize(full_residual.subset(train_rows), graph);
    const SparseFactor d = factorize(SlgpResidualOperator(train_coords, alpha, rc), graph);
    CHECK(std::memcmp(c.weights.data(), d.weights.data(),
                      sizeof(double) * static_cast<std::size_t>(c.weights.size())) == 0);
    CHECK(std::memcmp(c.f.data(), d.f.data(),
                      sizeof(double) * static_cast<std::size_t>(c.f.size())) == 0);
  }
}

TEST_CASE("the plain variant works where knot placement cannot") {
  const SpatialDataset ds = cv_dataset(8, 451);
  CvConfig cfg;
  cfg.alphas = {0.5};
  cfg.phis = {4.0};
  cfg.k_folds = 2;
  cfg.m = 2;

  CHECK_NOTHROW(grid_search(ds, cfg));
  cfg.r_target = 25;
  CHECK_THROWS_WITH(grid_search(ds, cfg), Contains("knot count"));
}

TEST_CASE("grid_search output is identical across thread counts") {
#if defined(_OPENMP)
  const SpatialDataset ds = cv_dataset(120, 461);
  CvConfig cfg;
  cfg.alphas = {0.3, 0.8};
  cfg.phis = {4.0, 9.0};
  cfg.k_folds = 3;
  cfg.m = 5;
  cfg.r_target = 4;
  cfg.seed = 6;

  omp_set_num_threads(1);
  const ScoreGrid serial = grid_search(ds, cfg);
  omp_set_num_threads(4);
  const ScoreGrid threaded = grid_search(ds, cfg);
  omp_set_num_threads(omp_get_num_procs());

  CHECK(std::memcmp(serial.crps.data(), threaded.crps.data(), sizeof(double) * 4) == 0);
  CHECK(std::memcmp(serial.rmspe.data(), threaded.rmspe.data(), sizeof(double) * 4) == 0);
  CHECK(std::memcmp(serial.crps_folds.data(), threaded.crps_folds.data(), sizeof(double) * 12) == 0);
  CHECK(serial.best_row == threaded.best_row);
  CHECK(serial.best_col == threaded.best_col);
#else
  SUCCEED("compiled without OpenMP");
#endif
}

TEST_CASE("desk-scale grid search selects near the generating parameters") {
  GeneratorSpec gen;
  gen.n = 2500;
  gen.sigma2 = 1.0;
  gen.phi = 12.0;
  gen.tau2 = 0.5;
  gen.beta = make_vector({1.0, 5.0});
  gen.seed = 7;
  const SpatialDataset all = simulate_gp(gen);

  std::vector<int> train_rows(2000), hold_rows(500);
  for (int i = 0; i < 2000; ++i) train_rows[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < 500; ++i) hold_rows[static_cast<std::size_t>(i)] = 2000 + i;
  const SpatialDataset train(permute_rows(all.coords(), train_rows), permute(all.y(), train_rows),
                             permute_rows(all.X(), train_rows));
  const SpatialDataset hold(permute_rows(all.coords(), hold_rows), permute(all.y(), hold_rows),
                            permute_rows(all.X(), hold_rows));

  CvConfig cfg;
  cfg.alphas = linspace(0.1, 1.9, 5);
  cfg.phis = linspace(3.0, 30.0, 5);
  cfg.k_folds = 5;
  cfg.m = 10;
  cfg.seed = 11;
  const ScoreGrid grid = grid_search(train, cfg);

  // the selection lands within one grid step of the truth (0.5, 12) in at
  // least one coordinate
  const double alpha_step = 0.45, phi_step = 6.75;
  const bool alpha_near = std::abs(grid.best_alpha() - 0.5) <= alpha_step + 1e-12;
  const bool phi_near = std::abs(grid.best_phi() - 12.0) <= phi_step + 1e-12;
  CHECK((alpha_near || phi_near));

  // the score surface is flat: worst-to-best spread under 15% on this seed
  CHECK(grid.crps.maxCoeff() / grid.crps.minCoeff() < 1.15);

  // both scoring rules pick parameter pairs whose holdout performance is
  // within 5%
  int rm_row = 0, rm_col = 0;
  for (int ia = 0; ia < 5; ++ia)
    for (int ip = 0; ip < 5; ++ip)
      if (grid.rmspe(ia, ip) < grid.rmspe(rm_row, rm_col)) {
        rm_row = ia;
        rm_col = ip;
      }
  const auto holdout_scores = [&](double alpha, double phi) {
    ModelConfig mc;
    mc.cov = {phi, alpha};
    mc.m = 10;
    const FittedModel fm = fit_model(train, mc);
    const auto preds = fm.predict(hold.coords(), hold.X());
    double ss = 0.0, cs = 0.0;
    for (Eigen::Index i = 0; i < hold.n(); ++i) {
      const double e = preds[static_cast<std::size_t>(i)].mean - hold.y()(i);
      ss += e * e;
      cs += crps_gaussian(preds[static_cast<std::size_t>(i)].mean,
                          preds[static_cast<std::size_t>(i)].variance, hold.y()(i));
    }
    return std::pair<double, double>(std::sqrt(ss / static_cast<double>(hold.n())),
                                     cs / static_cast<double>(hold.n()));
  };
  const auto [rmspe_a, crps_a] = holdout_scores(grid.best_alpha(), grid.best_phi());
  const auto [rmspe_b, crps_b] = holdout_scores(grid.alphas[static_cast<std::size_t>(rm_row)],
                                                grid.phis[static_cast<std::size_t>(rm_col)]);
  CHECK(std::abs(rmspe_a - rmspe_b) / std::min(rmspe_a, rmspe_b) < 0.05);
  CHECK(std::abs(crps_a - crps_b) / std::min(crps_a, crps_b) < 0.05);

  // the stored averages really are the fold means
  const int c = grid.candidate_index(grid.best_row, grid.best_col);
  double mean_crps = 0.0;
  for (int k = 0; k < 5; ++k) mean_crps += grid.crps_folds(c, k);
  CHECK(grid.crps(grid.best_row, grid.best_col) == mean_crps / 5);
}
