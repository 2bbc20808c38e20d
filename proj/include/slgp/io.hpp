#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slgp/core.hpp"
#include "slgp/model.hpp"

namespace slgp {

static_assert(std::endian::native == std::endian::little,
              "model artifacts store raw little-endian float64 payloads");

/// Shortest decimal string that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, const std::string& context) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw std::runtime_error(context + ": cannot parse number '" + std::string(token) + "'");
  return v;
}

inline long long parse_int(std::string_view token, const std::string& context) {
  long long v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw std::runtime_error(context + ": cannot parse integer '" + std::string(token) + "'");
  return v;
}

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string digest_hex(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      h = fnv1a(&v, sizeof(v), h);
    }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int k = 0; k < 16; ++k) buf[k] = hex[(h >> (60 - 4 * k)) & 0xf];
  buf[16] = '\0';
  return std::string(buf);
}

namespace csv {

/// Parsed point-referenced table. Covariates exclude the intercept; the
/// design matrix for modeling is assembled downstream as [1 | covariates].
struct Table {
  Matrix coords;
  Vector outcome;                  // empty for prediction-location files
  Matrix covariates;               // n x (p - 1), may have zero columns
  std::vector<std::string> covariate_names;
  bool has_outcome = false;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

/// Read a data or prediction-location table. Layout is fixed: columns x, y,
/// then (for data files) outcome, then covariate columns in file order.
/// Errors carry 1-based line numbers.
inline Table read_table(const std::string& path, bool expect_outcome, bool allow_empty = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  line = detail::strip_cr(line);
  const auto header = detail::split_line(line);
  const std::size_t fixed = expect_outcome ? 3 : 2;
  if (header.size() < fixed || header[0] != "x" || header[1] != "y" ||
      (expect_outcome && header[2] != "outcome")) {
    throw std::runtime_error(path + ": header must start with " +
                             (expect_outcome ? std::string("x,y,outcome") : std::string("x,y")));
  }
  Table t;
  t.has_outcome = expect_outcome;
  for (std::size_t j = fixed; j < header.size(); ++j) {
    if (header[j].empty()) throw std::runtime_error(path + ": empty covariate name in header");
    t.covariate_names.push_back(header[j]);
  }
  const std::size_t width = header.size();

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto tokens = detail::split_line(line);
    if (tokens.size() != width)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " fields, got " + std::to_string(tokens.size()));
    for (const auto& tok : tokens) {
      const double v = parse_double(tok, path + ": line " + std::to_string(line_no));
      if (!std::isfinite(v))
        throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0 && !allow_empty) throw std::runtime_error(path + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows);
  const auto n_cov = static_cast<Eigen::Index>(t.covariate_names.size());
  t.coords.resize(n, 2);
  if (expect_outcome) t.outcome.resize(n);
  t.covariates.resize(n, n_cov);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * width;
    t.coords(i, 0) = values[base];
    t.coords(i, 1) = values[base + 1];
    if (expect_outcome) t.outcome(i) = values[base + 2];
    for (Eigen::Index j = 0; j < n_cov; ++j)
      t.covariates(i, j) = values[base + fixed + static_cast<std::size_t>(j)];
  }
  return t;
}

inline void write_table(const std::string& path, const Matrix& coords, const Vector* outcome,
                        const Matrix& covariates, const std::vector<std::string>& covariate_names) {
  if (static_cast<std::size_t>(covariates.cols()) != covariate_names.size())
    throw std::invalid_argument("write_table: covariate name count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << "x,y";
  if (outcome) out << ",outcome";
  for (const auto& name : covariate_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out << format_double(coords(i, 0)) << ',' << format_double(coords(i, 1));
    if (outcome) out << ',' << format_double((*outcome)(i));
    for (Eigen::Index j = 0; j < covariates.cols(); ++j) out << ',' << format_double(covariates(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

inline void write_predictions(const std::string& path, const Matrix& locations,
                              const std::vector<PredictiveDistribution>& preds) {
  if (static_cast<std::size_t>(locations.rows()) != preds.size())
    throw std::invalid_argument("write_predictions: row count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << "x,y,mean,variance\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << format_double(locations(r, 0)) << ',' << format_double(locations(r, 1)) << ','
        << format_double(preds[i].mean) << ',' << format_double(preds[i].variance) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

}  // namespace csv

namespace artifact {

inline constexpr int kFormatVersion = 1;

namespace detail {

inline void put_matrix(std::ofstream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

inline void put_vector(std::ofstream& out, const Vector& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(double)) * v.size());
}

inline Matrix get_matrix(std::ifstream& in, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double v = 0.0;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error("model artifact truncated while reading " + what);
      m(i, j) = v;
    }
  return m;
}

inline Vector get_vector(std::ifstream& in, Eigen::Index size, const std::string& what) {
  Vector v(size);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double)) * size))
    throw std::runtime_error("model artifact truncated while reading " + what);
  return v;
}

}  // namespace detail

/// Save a fitted model: a human-readable header followed by a raw
/// little-endian float64 payload holding the prior, posterior, knots, and
/// the ordered training data needed for kriging.
inline void save_model(const std::string& path, const FittedModel& model,
                       const std::vector<std::string>& covariate_names) {
  const Eigen::Index p = model.p();
  const Eigen::Index r = model.r();
  if (static_cast<std::size_t>(p - 1) != covariate_names.size())
    throw std::invalid_argument("save_model: covariate name count mismatch");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);

  const Matrix& coords = model.coords();
  Vector mu_beta = model.config.prior.mu_beta.size() > 0 ? model.config.prior.mu_beta
                                                         : Vector(Vector::Zero(p));
  Matrix V_beta = model.config.prior.V_beta.size() > 0 ? model.config.prior.V_beta
                                                       : Matrix(1e4 * Matrix::Identity(p, p));

  out << "slgp-model " << kFormatVersion << '\n'
      << "variant " << (r > 0 ? "slgp" : "nngp") << '\n'
      << "n " << model.y.size() << '\n'
      << "p " << p << '\n'
      << "r " << r << '\n'
      << "m " << model.config.m << '\n'
      << "alpha " << format_double(model.config.cov.alpha) << '\n'
      << "phi " << format_double(model.config.cov.phi) << '\n'
      << "jitter " << format_double(model.config.jitter) << '\n'
      << "a_sigma " << format_double(model.config.prior.a_sigma) << '\n'
      << "b_sigma " << format_double(model.config.prior.b_sigma) << '\n'
      << "a_star " << format_double(model.fit.a_star) << '\n'
      << "b_star " << format_double(model.fit.b_star) << '\n'
      << "sqrt_outcome " << (model.sqrt_outcome ? 1 : 0) << '\n'
      << "ordering " << to_string(model.config.ordering) << '\n'
      << "coords_digest " << digest_hex(coords) << '\n'
      << "covariates ";
  for (std::size_t i = 0; i < covariate_names.size(); ++i) {
    if (covariate_names[i].find(',') != std::string::npos)
      throw std::invalid_argument("save_model: covariate names must not contain commas");
    out << (i > 0 ? "," : "") << covariate_names[i];
  }
  out << '\n' << "binary\n";

  detail::put_vector(out, mu_beta);
  detail::put_matrix(out, V_beta);
  if (r > 0) detail::put_matrix(out, model.with_op([](const auto& o) -> Matrix {
    if constexpr (std::is_same_v<std::decay_t<decltype(o)>, SlgpResidualOperator>)
      return o.residual().knots().coords;
    else
      return Matrix();
  }));
  detail::put_vector(out, model.fit.g);
  detail::put_matrix(out, model.fit.V);
  detail::put_matrix(out, coords);
  detail::put_vector(out, model.y);
  detail::put_matrix(out, model.design.X_star.block(0, 1, model.y.size(), p - 1));
  if (!out) throw std::runtime_error("failed writing model artifact: " + path);
}

struct LoadedModel {
  FittedModel model;
  std::vector<std::string> covariate_names;
};

/// Load a model artifact and rebuild the in-memory model. The cached knot
/// projections and design are deterministic functions of the stored arrays,
/// so reloaded models predict bit-identically to the model that was saved.
inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model artifact: " + path);

  std::string line;
  auto next_field = [&](const std::string& key) -> std::string {
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated artifact header");
    if (line.rfind(key + " ", 0) != 0 && line != key)
      throw std::runtime_error(path + ": expected header field '" + key + "', got '" + line + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  };

  const std::string version = next_field("slgp-model");
  if (version != std::to_string(kFormatVersion))
    throw std::runtime_error(path + ": unsupported artifact version " + version);
  const std::string variant = next_field("variant");
  if (variant != "slgp" && variant != "nngp")
    throw std::runtime_error(path + ": unknown model variant " + variant);
  const auto n = static_cast<Eigen::Index>(parse_int(next_field("n"), path));
  const auto p = static_cast<Eigen::Index>(parse_int(next_field("p"), path));
  const auto r = static_cast<Eigen::Index>(parse_int(next_field("r"), path));
  const int m = static_cast<int>(parse_int(next_field("m"), path));
  const double alpha = parse_double(next_field("alpha"), path);
  const double phi = parse_double(next_field("phi"), path);
  const double jitter = parse_double(next_field("jitter"), path);
  const double a_sigma = parse_double(next_field("a_sigma"), path);
  const double b_sigma = parse_double(next_field("b_sigma"), path);
  const double a_star = parse_double(next_field("a_star"), path);
  const double b_star = parse_double(next_field("b_star"), path);
  const std::string sqrt_flag = next_field("sqrt_outcome");
  const OrderingStrategy ordering = ordering_from_string(next_field("ordering"));
  const std::string stored_digest = next_field("coords_digest");
  std::vector<std::string> covariate_names;
  {
    const std::string joined = next_field("covariates");
    std::size_t start = 0;
    while (start < joined.size()) {
      auto pos = joined.find(',', start);
      if (pos == std::string::npos) pos = joined.size();
      covariate_names.push_back(joined.substr(start, pos - start));
      start = pos + 1;
    }
  }
  if (next_field("binary") != "") throw std::runtime_error(path + ": malformed binary marker");
  if (n < 1 || p < 1 || r < 0 || m < 1 || (variant == "slgp") != (r > 0))
    throw std::runtime_error(path + ": inconsistent artifact dimensions");
  if (static_cast<Eigen::Index>(covariate_names.size()) != p - 1)
    throw std::runtime_error(path + ": covariate name count does not match p");

  const Eigen::Index q = p + r;
  LoadedModel out;
  out.covariate_names = covariate_names;
  FittedModel& model = out.model;
  model.config.cov = CovarianceSpec{phi, alpha};
  model.config.m = m;
  model.config.r_target = static_cast<int>(r);
  model.config.jitter = jitter;
  model.config.ordering = ordering;
  model.config.prior.a_sigma = a_sigma;
  model.config.prior.b_sigma = b_sigma;
  model.sqrt_outcome = sqrt_flag == "1";

  model.config.prior.mu_beta = detail::get_vector(in, p, "mu_beta");
  model.config.prior.V_beta = detail::get_matrix(in, p, p, "V_beta");
  Matrix knot_coords;
  if (r > 0) knot_coords = detail::get_matrix(in, r, 2, "knots");
  model.fit.g = detail::get_vector(in, q, "g");
  model.fit.V = detail::get_matrix(in, q, q, "V");
  Matrix coords = detail::get_matrix(in, n, 2, "coords");
  model.y = detail::get_vector(in, n, "y");
  const Matrix covs = detail::get_matrix(in, n, p - 1, "covariates");
  char extra = 0;
  if (in.read(&extra, 1)) throw std::runtime_error(path + ": trailing bytes after payload");

  if (digest_hex(coords) != stored_digest)
    throw std::runtime_error(path + ": coordinate digest mismatch (corrupt or edited artifact)");

  model.fit.a_star = a_star;
  model.fit.b_star = b_star;
  model.fit.n = n;
  model.fit.p = p;
  model.fit.r = r;
  model.order.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) model.order[static_cast<std::size_t>(i)] = static_cast<int>(i);

  Matrix X(n, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = covs;

  if (r > 0) {
    KnotSet knots;
    knots.coords = std::move(knot_coords);
    auto rc = std::make_shared<const ResidualCorrelation>(std::move(knots), phi, jitter);
    const Matrix J = build_J(coords, *rc);
    model.design = augment_design(X, &J, rc.get(), model.config.prior);
    model.op = SlgpResidualOperator(std::move(coords), alpha, rc);
  } else {
    model.design = augment_design(X, nullptr, nullptr, model.config.prior);
    model.op = MarginalOperator(std::move(coords), phi, alpha);
  }
  return out;
}

}  // namespace artifact
}  // namespace slgp
