// Command-line front end: simulate / cv / fit / predict workflows over the
// CSV and model-artifact formats documented in the README. Every command is
// deterministic given its inputs, the seed, and a fixed thread count; wall
// times are the only nondeterministic manifest fields.

#include "CLI11.hpp"
#include "json.hpp"

#include <slgp/crossval.hpp>
#include <slgp/io.hpp>
#include <slgp/model.hpp>
#include <slgp/simulate.hpp>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace {

using json = nlohmann::json;
using slgp::Matrix;
using slgp::Vector;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void apply_threads(int threads) {
#if defined(_OPENMP)
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

/// Comma-separated list of numbers; an empty string parses to an empty list.
std::vector<double> parse_list(const std::string& spec, const std::string& flag) {
  std::vector<double> out;
  if (spec.empty()) return out;
  for (const auto& tok : split(spec, ','))
    out.push_back(slgp::parse_double(tok, flag));
  return out;
}

/// Grid spec: a single number, a comma list, or lo:hi:count (inclusive,
/// evenly spaced).
std::vector<double> parse_grid(const std::string& spec, const std::string& flag) {
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3)
      throw std::runtime_error(flag + ": grid spec must be lo:hi:count, got '" + spec + "'");
    const double lo = slgp::parse_double(parts[0], flag);
    const double hi = slgp::parse_double(parts[1], flag);
    const int count = slgp::parse_int(parts[2], flag);
    return slgp::linspace(lo, hi, count);
  }
  const auto out = parse_list(spec, flag);
  if (out.empty()) throw std::runtime_error(flag + ": empty grid spec");
  return out;
}

double parse_single(const std::string& spec, const std::string& flag) {
  const auto vals = parse_grid(spec, flag);
  if (vals.size() != 1)
    throw std::runtime_error(flag + ": expected a single value, got " +
                             std::to_string(vals.size()));
  return vals[0];
}

Matrix with_intercept(const Matrix& covariates) {
  Matrix X(covariates.rows(), covariates.cols() + 1);
  X.col(0).setOnes();
  if (covariates.cols() > 0) X.rightCols(covariates.cols()) = covariates;
  return X;
}

void write_manifest(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

void print_kv(const std::string& key, const std::string& value) {
  std::cout << key << '=' << value << '\n';
}
void print_kv(const std::string& key, double value) { print_kv(key, slgp::format_double(value)); }
void print_kv(const std::string& key, std::int64_t value) { print_kv(key, std::to_string(value)); }

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  int n = 0;
  double sigma2 = 1.0;
  double phi = 12.0;
  double tau2 = 0.5;
  std::string beta;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
  std::string train_path = "train.csv";
  std::string holdout_path = "holdout.csv";
  std::string manifest_path = "simulate_manifest.json";
  int threads = 0;
};

int run_simulate(const SimulateOptions& o) {
  Stopwatch watch;
  apply_threads(o.threads);
  if (!(o.holdout_fraction >= 0.0 && o.holdout_fraction < 1.0))
    throw std::runtime_error("--holdout-fraction must lie in [0, 1)");

  slgp::GeneratorSpec spec;
  spec.n = o.n;
  spec.sigma2 = o.sigma2;
  spec.phi = o.phi;
  spec.tau2 = o.tau2;
  spec.seed = o.seed;
  const auto beta = parse_list(o.beta, "--beta");
  if (!beta.empty()) {
    spec.beta.resize(static_cast<Eigen::Index>(beta.size()));
    for (std::size_t i = 0; i < beta.size(); ++i) spec.beta(static_cast<Eigen::Index>(i)) = beta[i];
  }
  const slgp::SpatialDataset ds = slgp::simulate_gp(spec);

  const int n = static_cast<int>(ds.n());
  const int n_hold = static_cast<int>(std::llround(o.holdout_fraction * n));
  if (n_hold >= n) throw std::runtime_error("--holdout-fraction leaves no training rows");

  // Split with an rng independent of the generator's stream so the realized
  // field for a seed does not depend on the fraction.
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  slgp::Rng split_rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(split_rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<int> hold_rows(idx.begin(), idx.begin() + n_hold);
  std::vector<int> train_rows(idx.begin() + n_hold, idx.end());
  std::sort(hold_rows.begin(), hold_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  const Eigen::Index q = ds.p() - 1;  // intercept never appears in files
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < q; ++j) names.push_back("cov_" + std::to_string(j + 1));
  const Matrix covs = ds.X().rightCols(q);

  const auto write_part = [&](const std::string& path, const std::vector<int>& rows) {
    const Matrix part_coords = slgp::permute_rows(ds.coords(), rows);
    const Vector part_y = slgp::permute(ds.y(), rows);
    const Matrix part_covs = q > 0 ? Matrix(slgp::permute_rows(covs, rows)) : Matrix(static_cast<Eigen::Index>(rows.size()), 0);
    slgp::csv::write_table(path, part_coords, &part_y, part_covs, names);
  };
  write_part(o.train_path, train_rows);
  write_part(o.holdout_path, hold_rows);

  json manifest = {
      {"command", "simulate"},
      {"config",
       {{"n", o.n},
        {"sigma2", o.sigma2},
        {"phi", o.phi},
        {"tau2", o.tau2},
        {"beta", beta},
        {"seed", o.seed},
        {"holdout_fraction", o.holdout_fraction},
        {"train", o.train_path},
        {"holdout", o.holdout_path},
        {"manifest", o.manifest_path},
        {"threads", o.threads}}},
      {"realized", {{"n_train", n - n_hold}, {"n_holdout", n_hold}, {"covariates", names}}},
      {"wall_time_seconds", watch.seconds()},
  };
  write_manifest(o.manifest_path, manifest);

  print_kv("train", o.train_path);
  print_kv("holdout", o.holdout_path);
  print_kv("n_train", static_cast<std::int64_t>(n - n_hold));
  print_kv("n_holdout", static_cast<std::int64_t>(n_hold));
  return 0;
}

// ---------------------------------------------------------------------------
// shared ingestion for cv / fit

struct DataOptions {
  std::string data_path;
  bool sqrt_outcome = false;
  bool dedupe = false;
  std::string fold_column;  // cv only
};

struct Ingested {
  slgp::SpatialDataset ds;
  std::vector<std::string> covariate_names;
  std::vector<int> fold_labels;
};

Ingested ingest(const DataOptions& o) {
  auto table = slgp::csv::read_table(o.data_path, /*expect_outcome=*/true);

  std::vector<int> fold_labels;
  Matrix covs = std::move(table.covariates);
  std::vector<std::string> names = std::move(table.covariate_names);
  if (!o.fold_column.empty()) {
    const auto it = std::find(names.begin(), names.end(), o.fold_column);
    if (it == names.end())
      throw std::runtime_error("fold column '" + o.fold_column + "' not found in " + o.data_path);
    const auto j = static_cast<Eigen::Index>(it - names.begin());
    fold_labels.reserve(static_cast<std::size_t>(covs.rows()));
    for (Eigen::Index i = 0; i < covs.rows(); ++i) {
      const double v = covs(i, j);
      if (!(v >= 0.0) || v != std::floor(v) || v > 1e6)
        throw std::runtime_error("fold column '" + o.fold_column + "': row " + std::to_string(i) +
                                 ": labels must be small nonnegative integers");
      fold_labels.push_back(static_cast<int>(v));
    }
    Matrix reduced(covs.rows(), covs.cols() - 1);
    reduced.leftCols(j) = covs.leftCols(j);
    reduced.rightCols(covs.cols() - 1 - j) = covs.rightCols(covs.cols() - 1 - j);
    covs = std::move(reduced);
    names.erase(it);
  }

  Vector y = std::move(table.outcome);
  if (o.sqrt_outcome) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) < 0.0)
        throw std::runtime_error("--sqrt-outcome requires nonnegative outcomes (row " +
                                 std::to_string(i) + " is negative)");
    y = y.array().sqrt();
  }

  Matrix X = with_intercept(covs);
  if (o.dedupe) {
    if (!fold_labels.empty())
      throw std::runtime_error("--dedupe cannot be combined with --fold-column");
    return {slgp::deduplicate_by_mean(table.coords, y, X), std::move(names), {}};
  }
  try {
    return {slgp::SpatialDataset(std::move(table.coords), std::move(y), std::move(X)),
            std::move(names), std::move(fold_labels)};
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.find("duplicate coordinates") != std::string::npos)
      throw std::runtime_error(msg + "; rerun with --dedupe to average duplicate locations");
    throw;
  }
}

// ---------------------------------------------------------------------------
// cv

struct CvOptions {
  std::string data_path;
  std::string alpha_spec;
  std::string phi_spec;
  int k_folds = 5;
  int m = 15;
  int knots = 0;
  double jitter = 1e-8;
  std::string ordering = "first-coordinate";
  std::string score = "crps";
  std::uint64_t seed = 0;
  double a_sigma = 2.0;
  double b_sigma = 1.0;
  bool sqrt_outcome = false;
  bool dedupe = false;
  std::string fold_column;
  bool k_folds_given = false;
  std::string scores_path = "cv_scores.csv";
  std::string out_path = "cv_result.json";
  int threads = 0;
};

json echo_cv_config(const CvOptions& o) {
  return {{"data", o.data_path},   {"alpha", o.alpha_spec},
          {"phi", o.phi_spec},     {"k_folds", o.k_folds},
          {"m", o.m},              {"knots", o.knots},
          {"jitter", o.jitter},    {"ordering", o.ordering},
          {"score", o.score},      {"seed", o.seed},
          {"a_sigma", o.a_sigma},  {"b_sigma", o.b_sigma},
          {"sqrt_outcome", o.sqrt_outcome}, {"dedupe", o.dedupe},
          {"fold_column", o.fold_column},   {"scores", o.scores_path},
          {"out", o.out_path},     {"threads", o.threads}};
}

int run_cv(const CvOptions& o) {
  Stopwatch watch;
  apply_threads(o.threads);

  auto data = ingest({o.data_path, o.sqrt_outcome, o.dedupe, o.fold_column});

  slgp::CvConfig cfg;
  cfg.alphas = parse_grid(o.alpha_spec, "--alpha");
  cfg.phis = parse_grid(o.phi_spec, "--phi");
  cfg.k_folds = o.k_folds;
  cfg.m = o.m;
  cfg.r_target = o.knots;
  cfg.jitter = o.jitter;
  cfg.ordering = slgp::ordering_from_string(o.ordering);
  cfg.scoring = slgp::score_rule_from_string(o.score);
  cfg.seed = o.seed;
  cfg.prior.a_sigma = o.a_sigma;
  cfg.prior.b_sigma = o.b_sigma;
  if (!data.fold_labels.empty()) {
    const int derived = 1 + *std::max_element(data.fold_labels.begin(), data.fold_labels.end());
    if (o.k_folds_given && o.k_folds != derived)
      throw std::runtime_error("--k-folds " + std::to_string(o.k_folds) +
                               " does not match the fold column (labels imply " +
                               std::to_string(derived) + " folds)");
    cfg.k_folds = derived;
    cfg.fold_labels = data.fold_labels;
  }

  const slgp::ScoreGrid grid = slgp::grid_search(data.ds, cfg);

  {
    std::ofstream out(o.scores_path);
    if (!out) throw std::runtime_error("cannot open output file: " + o.scores_path);
    out << "alpha,phi,crps,rmspe";
    for (int k = 0; k < cfg.k_folds; ++k) out << ",crps_fold_" << (k + 1);
    for (int k = 0; k < cfg.k_folds; ++k) out << ",rmspe_fold_" << (k + 1);
    out << '\n';
    const int na = static_cast<int>(grid.alphas.size());
    const int np = static_cast<int>(grid.phis.size());
    for (int ia = 0; ia < na; ++ia) {
      for (int ip = 0; ip < np; ++ip) {
        const int c = grid.candidate_index(ia, ip);
        out << slgp::format_double(grid.alphas[static_cast<std::size_t>(ia)]) << ','
            << slgp::format_double(grid.phis[static_cast<std::size_t>(ip)]) << ','
            << slgp::format_double(grid.crps(ia, ip)) << ','
            << slgp::format_double(grid.rmspe(ia, ip));
        for (int k = 0; k < cfg.k_folds; ++k) out << ',' << slgp::format_double(grid.crps_folds(c, k));
        for (int k = 0; k < cfg.k_folds; ++k) out << ',' << slgp::format_double(grid.rmspe_folds(c, k));
        out << '\n';
      }
    }
    if (!out) throw std::runtime_error("write failed: " + o.scores_path);
  }

  json result = {
      {"command", "cv"},
      {"config", echo_cv_config(o)},
      {"selected",
       {{"alpha", grid.best_alpha()},
        {"phi", grid.best_phi()},
        {"crps", grid.crps(grid.best_row, grid.best_col)},
        {"rmspe", grid.rmspe(grid.best_row, grid.best_col)}}},
      {"scoring", slgp::to_string(grid.scoring)},
      {"grid", {{"alphas", grid.alphas}, {"phis", grid.phis}, {"rows", grid.alphas.size() * grid.phis.size()}}},
      {"folds", cfg.k_folds},
      {"n", data.ds.n()},
      {"p", data.ds.p()},
      {"wall_time_seconds", watch.seconds()},
  };
  write_manifest(o.out_path, result);

  print_kv("selected_alpha", grid.best_alpha());
  print_kv("selected_phi", grid.best_phi());
  print_kv("scoring", slgp::to_string(grid.scoring));
  print_kv("scores", o.scores_path);
  print_kv("result", o.out_path);
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string data_path;
  std::string alpha_spec;
  std::string phi_spec;
  std::string from_cv;
  int m = 15;
  int knots = 0;
  double jitter = 1e-8;
  std::string ordering = "first-coordinate";
  double a_sigma = 2.0;
  double b_sigma = 1.0;
  bool sqrt_outcome = false;
  bool dedupe = false;
  std::string out_path = "model.bin";
  std::string manifest_path = "fit_manifest.json";
  int threads = 0;
};

int run_fit(const FitOptions& o) {
  Stopwatch watch;
  apply_threads(o.threads);

  double alpha = 0.0;
  double phi = 0.0;
  if (!o.from_cv.empty()) {
    std::ifstream in(o.from_cv);
    if (!in) throw std::runtime_error("cannot open input file: " + o.from_cv);
    json cv_result;
    try {
      in >> cv_result;
    } catch (const json::exception& e) {
      throw std::runtime_error(o.from_cv + ": not a valid JSON cv result (" + e.what() + ")");
    }
    if (!cv_result.contains("selected") || !cv_result["selected"].contains("alpha") ||
        !cv_result["selected"].contains("phi"))
      throw std::runtime_error(o.from_cv + ": missing selected.alpha / selected.phi");
    alpha = cv_result["selected"]["alpha"].get<double>();
    phi = cv_result["selected"]["phi"].get<double>();
  } else {
    if (o.alpha_spec.empty() || o.phi_spec.empty())
      throw std::runtime_error("fit needs --alpha and --phi, or --from-cv");
    alpha = parse_single(o.alpha_spec, "--alpha");
    phi = parse_single(o.phi_spec, "--phi");
  }

  auto data = ingest({o.data_path, o.sqrt_outcome, o.dedupe, ""});

  slgp::ModelConfig cfg;
  cfg.cov.alpha = alpha;
  cfg.cov.phi = phi;
  cfg.m = o.m;
  cfg.r_target = o.knots;
  cfg.jitter = o.jitter;
  cfg.ordering = slgp::ordering_from_string(o.ordering);
  cfg.prior.a_sigma = o.a_sigma;
  cfg.prior.b_sigma = o.b_sigma;

  slgp::FittedModel model = slgp::fit_model(data.ds, cfg);
  model.sqrt_outcome = o.sqrt_outcome;
  slgp::artifact::save_model(o.out_path, model, data.covariate_names);

  const Eigen::Index p = model.p();
  std::optional<slgp::PointEstimates> pe;
  if (model.fit.a_star > 1.0) pe = slgp::point_estimates(model.fit, alpha);

  print_kv("n", static_cast<std::int64_t>(data.ds.n()));
  print_kv("p", static_cast<std::int64_t>(p));
  print_kv("r", static_cast<std::int64_t>(model.r()));
  print_kv("m", static_cast<std::int64_t>(cfg.m));
  print_kv("alpha", alpha);
  print_kv("phi", phi);
  print_kv("a_star", model.fit.a_star);
  print_kv("b_star", model.fit.b_star);
  for (Eigen::Index j = 0; j < p; ++j)
    print_kv("beta_" + std::to_string(j), model.fit.g(j));
  if (pe) {
    print_kv("sigma2", pe->sigma2);
    print_kv("tau2", pe->tau2);
  }
  print_kv("model", o.out_path);

  json beta = json::array();
  for (Eigen::Index j = 0; j < p; ++j) beta.push_back(model.fit.g(j));
  json manifest = {
      {"command", "fit"},
      {"config",
       {{"data", o.data_path},
        {"alpha", alpha},
        {"phi", phi},
        {"from_cv", o.from_cv},
        {"m", o.m},
        {"knots", o.knots},
        {"jitter", o.jitter},
        {"ordering", o.ordering},
        {"a_sigma", o.a_sigma},
        {"b_sigma", o.b_sigma},
        {"sqrt_outcome", o.sqrt_outcome},
        {"dedupe", o.dedupe},
        {"out", o.out_path},
        {"manifest", o.manifest_path},
        {"threads", o.threads}}},
      {"n", data.ds.n()},
      {"p", p},
      {"r", model.r()},
      {"a_star", model.fit.a_star},
      {"b_star", model.fit.b_star},
      {"beta", beta},
      {"sigma2", pe ? json(pe->sigma2) : json()},
      {"tau2", pe ? json(pe->tau2) : json()},
      {"model", o.out_path},
      {"wall_time_seconds", watch.seconds()},
  };
  write_manifest(o.manifest_path, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string model_path;
  std::string locations_path;
  std::string out_path = "predictions.csv";
  int m = 0;  // 0: use the artifact's m
  bool back_transform = false;
  std::string manifest_path = "predict_manifest.json";
  int threads = 0;
};

int run_predict(const PredictOptions& o) {
  Stopwatch watch;
  apply_threads(o.threads);

  slgp::artifact::LoadedModel loaded = slgp::artifact::load_model(o.model_path);
  const auto table = slgp::csv::read_table(o.locations_path, /*expect_outcome=*/false,
                                           /*allow_empty=*/true);

  if (table.covariate_names.size() != loaded.covariate_names.size())
    throw std::runtime_error("locations file has " + std::to_string(table.covariate_names.size()) +
                             " covariate columns but the model expects " +
                             std::to_string(loaded.covariate_names.size()));
  if (o.back_transform && !loaded.model.sqrt_outcome)
    throw std::runtime_error(
        "--back-transform requires a model fit with --sqrt-outcome; this artifact was not");
  if (o.m > 0) loaded.model.config.m = o.m;

  const Matrix X0 = with_intercept(table.covariates);
  std::vector<slgp::PredictiveDistribution> preds = loaded.model.predict(table.coords, X0);
  if (o.back_transform) {
    // Predictive moments of the squared outcome: if Z has mean mu and
    // variance v, then Z^2 has mean mu^2 + v and variance 2 v^2 + 4 mu^2 v.
    for (auto& pr : preds) {
      const double mu = pr.mean;
      const double v = pr.variance;
      pr.mean = mu * mu + v;
      pr.variance = 2.0 * v * v + 4.0 * mu * mu * v;
    }
  }
  slgp::csv::write_predictions(o.out_path, table.coords, preds);

  json manifest = {
      {"command", "predict"},
      {"config",
       {{"model", o.model_path},
        {"locations", o.locations_path},
        {"out", o.out_path},
        {"m", o.m > 0 ? o.m : loaded.model.config.m},
        {"back_transform", o.back_transform},
        {"manifest", o.manifest_path},
        {"threads", o.threads}}},
      {"n_predictions", preds.size()},
      {"model_summary",
       {{"n", loaded.model.coords().rows()},
        {"p", loaded.model.p()},
        {"r", loaded.model.r()},
        {"alpha", loaded.model.config.cov.alpha},
        {"phi", loaded.model.config.cov.phi},
        {"sqrt_outcome", loaded.model.sqrt_outcome}}},
      {"wall_time_seconds", watch.seconds()},
  };
  write_manifest(o.manifest_path, manifest);

  print_kv("predictions", o.out_path);
  print_kv("n_predictions", static_cast<std::int64_t>(preds.size()));
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Conjugate Bayesian spatial interpolation: nearest-neighbor and "
               "sparse-plus-low-rank Gaussian process models"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config appear after the subcommand name
  app.set_config("--config", "", "Read option defaults from a TOML/INI file ([subcommand] sections)");
  app.failure_message([](const CLI::App*, const CLI::Error& e) {
    return std::string("error: ") + e.what() + "\n";
  });

  SimulateOptions sim;
  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "Draw a synthetic dataset from the exponential-covariance model and split it");
  sim_cmd->add_option("--n", sim.n, "Number of locations")->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--sigma2", sim.sigma2, "Partial sill (spatial variance)")
      ->capture_default_str();
  sim_cmd->add_option("--phi", sim.phi, "Correlation decay rate")->capture_default_str();
  sim_cmd->add_option("--tau2", sim.tau2, "Nugget variance")->capture_default_str();
  sim_cmd->add_option("--beta", sim.beta,
                      "Regression coefficients, comma-separated; first one is the intercept");
  sim_cmd->add_option("--seed", sim.seed, "Generator seed")->capture_default_str();
  sim_cmd->add_option("--holdout-fraction", sim.holdout_fraction, "Fraction held out at random")
      ->capture_default_str();
  sim_cmd->add_option("--train", sim.train_path, "Training CSV path")->capture_default_str();
  sim_cmd->add_option("--holdout", sim.holdout_path, "Holdout CSV path")->capture_default_str();
  sim_cmd->add_option("--manifest", sim.manifest_path, "Run manifest path")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0: library default)")
      ->capture_default_str();

  CvOptions cv;
  CLI::App* cv_cmd = app.add_subcommand(
      "cv", "K-fold cross-validated grid search over (alpha, phi) candidates");
  cv_cmd->add_option("--data", cv.data_path, "Training CSV (x,y,outcome,covariates...)")
      ->required()
      ->check(CLI::ExistingFile);
  cv_cmd->add_option("--alpha", cv.alpha_spec,
                     "Noise-to-signal candidates: value, comma list, or lo:hi:count")
      ->required();
  cv_cmd->add_option("--phi", cv.phi_spec, "Decay candidates: value, comma list, or lo:hi:count")
      ->required();
  CLI::Option* k_opt =
      cv_cmd->add_option("--k-folds", cv.k_folds, "Number of folds")->capture_default_str();
  cv_cmd->add_option("--m", cv.m, "Neighbors per location")->capture_default_str();
  cv_cmd->add_option("--knots", cv.knots,
                     "Target knot count for the low-rank component (0: none)")
      ->capture_default_str();
  cv_cmd->add_option("--jitter", cv.jitter, "Knot-matrix diagonal jitter")->capture_default_str();
  cv_cmd->add_option("--ordering", cv.ordering, "Location ordering strategy")
      ->check(CLI::IsMember({"first-coordinate", "coordinate-sum"}))
      ->capture_default_str();
  cv_cmd->add_option("--score", cv.score, "Selection rule")
      ->check(CLI::IsMember({"crps", "rmspe"}))
      ->capture_default_str();
  cv_cmd->add_option("--seed", cv.seed, "Fold-split seed")->capture_default_str();
  cv_cmd->add_option("--a-sigma", cv.a_sigma, "Inverse-gamma prior shape")->capture_default_str();
  cv_cmd->add_option("--b-sigma", cv.b_sigma, "Inverse-gamma prior rate")->capture_default_str();
  cv_cmd->add_flag("--sqrt-outcome", cv.sqrt_outcome,
                   "Square-root transform outcomes on ingest");
  cv_cmd->add_flag("--dedupe", cv.dedupe, "Average rows at duplicate coordinates");
  cv_cmd->add_option("--fold-column", cv.fold_column,
                     "Covariate column holding explicit fold labels 0..K-1");
  cv_cmd->add_option("--scores", cv.scores_path, "Score-grid CSV path")->capture_default_str();
  cv_cmd->add_option("--out", cv.out_path, "Selected-parameters JSON path")->capture_default_str();
  cv_cmd->add_option("--threads", cv.threads, "Worker threads (0: library default)")
      ->capture_default_str();

  FitOptions fit;
  CLI::App* fit_cmd =
      app.add_subcommand("fit", "Fit the conjugate model at fixed (alpha, phi) and save an artifact");
  fit_cmd->add_option("--data", fit.data_path, "Training CSV (x,y,outcome,covariates...)")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::Option* fit_alpha = fit_cmd->add_option("--alpha", fit.alpha_spec, "Noise-to-signal ratio");
  CLI::Option* fit_phi = fit_cmd->add_option("--phi", fit.phi_spec, "Correlation decay rate");
  CLI::Option* fit_from_cv =
      fit_cmd->add_option("--from-cv", fit.from_cv, "Read selected (alpha, phi) from a cv result JSON")
          ->check(CLI::ExistingFile);
  fit_from_cv->excludes(fit_alpha)->excludes(fit_phi);
  fit_cmd->add_option("--m", fit.m, "Neighbors per location")->capture_default_str();
  fit_cmd->add_option("--knots", fit.knots,
                      "Target knot count for the low-rank component (0: none)")
      ->capture_default_str();
  fit_cmd->add_option("--jitter", fit.jitter, "Knot-matrix diagonal jitter")->capture_default_str();
  fit_cmd->add_option("--ordering", fit.ordering, "Location ordering strategy")
      ->check(CLI::IsMember({"first-coordinate", "coordinate-sum"}))
      ->capture_default_str();
  fit_cmd->add_option("--a-sigma", fit.a_sigma, "Inverse-gamma prior shape")->capture_default_str();
  fit_cmd->add_option("--b-sigma", fit.b_sigma, "Inverse-gamma prior rate")->capture_default_str();
  fit_cmd->add_flag("--sqrt-outcome", fit.sqrt_outcome,
                    "Square-root transform outcomes on ingest");
  fit_cmd->add_flag("--dedupe", fit.dedupe, "Average rows at duplicate coordinates");
  fit_cmd->add_option("--out", fit.out_path, "Model artifact path")->capture_default_str();
  fit_cmd->add_option("--manifest", fit.manifest_path, "Run manifest path")->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (0: library default)")
      ->capture_default_str();

  PredictOptions pred;
  CLI::App* pred_cmd =
      app.add_subcommand("predict", "Krige at new locations from a saved model artifact");
  pred_cmd->add_option("--model", pred.model_path, "Model artifact path")
      ->required()
      ->check(CLI::ExistingFile);
  pred_cmd->add_option("--locations", pred.locations_path, "Locations CSV (x,y,covariates...)")
      ->required()
      ->check(CLI::ExistingFile);
  pred_cmd->add_option("--out", pred.out_path, "Predictions CSV path")->capture_default_str();
  pred_cmd->add_option("--m", pred.m, "Neighbors per prediction (0: artifact setting)")
      ->capture_default_str();
  pred_cmd->add_flag("--back-transform", pred.back_transform,
                     "Report moments of the squared outcome (square-root-transformed fits only)");
  pred_cmd->add_option("--manifest", pred.manifest_path, "Run manifest path")->capture_default_str();
  pred_cmd->add_option("--threads", pred.threads, "Worker threads (0: library default)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  cv.k_folds_given = k_opt->count() > 0;
  if (sim_cmd->parsed()) return run_simulate(sim);
  if (cv_cmd->parsed()) return run_cv(cv);
  if (fit_cmd->parsed()) return run_fit(fit);
  return run_predict(pred);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n' || c == '\r') c = ' ';
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return 1;
  }
}
