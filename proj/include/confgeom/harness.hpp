#pragma once

// Monte Carlo experiment runner: configuration, nonsequential and
// sequential cells, batched standard errors, CSV and manifest output.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "confgeom/conformal.hpp"
#include "confgeom/errors.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/models.hpp"
#include "confgeom/sequential.hpp"

namespace confgeom {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  ModelKind model = ModelKind::Vmf;
  std::size_t m = 2;
  double r = 0.0;
  Vector u0;
  Matrix D;  // m x (m + 1)
  std::vector<double> grid_N;
  std::vector<double> grid_K;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::string outdir = "results";
  std::size_t threads = 0;  // 0 = hardware concurrency; not a config key
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& v, std::size_t line, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in '" + key + "'", line);
    std::size_t used = 0;
    double x;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "' entry '" + item + "' is not a number", line);
    }
    if (used != item.size()) throw ConfigError("'" + key + "' entry '" + item + "' is not a number", line);
    out.push_back(x);
  }
  if (out.empty()) throw ConfigError("'" + key + "' is empty", line);
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& v, std::size_t line, const std::string& key) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("'" + key + "' must be a nonnegative integer", line);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' is out of range", line);
  }
}

/// Chart and margin checks for the true direction.
inline void validate_u0(const ExperimentConfig& c, std::size_t line) {
  const DirectionalModel model = make_model(c.model, c.m, c.r);
  try {
    model.check_chart(c.u0);
    model.gauge().value(c.u0);
  } catch (const Error& e) {
    throw ConfigError(std::string("u0 is not a valid chart point: ") + e.what(), line);
  }
  for (Eigen::Index a = 0; a < c.u0.size(); ++a) {
    const double x = c.u0(a);
    const double s = a == 0 && model.hyperbolic() ? std::sinh(x) : std::sin(x);
    if (std::abs(s) < 1e-3) throw ConfigError("u0 lies within the singular margin of the chart", line);
  }
}

}  // namespace detail

/// Parses the line-oriented `key = value` format; `#` starts a comment.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::stringstream ss(text);
  std::string raw;
  std::size_t line = 0;
  static const char* keys[] = {"model", "m", "r", "u0", "D", "grid_N", "grid_K", "replications", "seed", "outdir"};
  while (std::getline(ss, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return key == k; }) == std::end(keys))
      throw ConfigError("unknown key '" + key + "'", line);
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'", line);
    if (value.empty()) throw ConfigError("key '" + key + "' has no value", line);
    kv[key] = {value, line};
  }
  auto need = [&](const char* k) -> const std::pair<std::string, std::size_t>& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError(std::string("missing required key '") + k + "'", 0);
    return it->second;
  };

  {
    const auto& [v, l] = need("model");
    try {
      c.model = parse_model_kind(v);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what(), l);
    }
  }
  if (kv.count("m")) {
    const auto& [v, l] = kv["m"];
    c.m = static_cast<std::size_t>(detail::parse_unsigned(v, l, "m"));
    if (c.m != 2) throw ConfigError("simulations support m = 2 only", l);
  }
  {
    const auto& [v, l] = need("r");
    const auto xs = detail::parse_list(v, l, "r");
    if (xs.size() != 1 || !(xs[0] > 0.0) || !std::isfinite(xs[0])) throw ConfigError("r must be one positive number", l);
    c.r = xs[0];
  }
  {
    const auto& [v, l] = need("u0");
    const auto xs = detail::parse_list(v, l, "u0");
    if (xs.size() != c.m) throw ConfigError("u0 must have m entries", l);
    c.u0 = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    detail::validate_u0(c, l);
  }
  const auto m = static_cast<Eigen::Index>(c.m);
  if (kv.count("D")) {
    const auto& [v, l] = kv["D"];
    const auto xs = detail::parse_list(v, l, "D");
    if (xs.size() != c.m * (c.m + 1)) throw ConfigError("D must have m * (m + 1) entries (row-major)", l);
    c.D = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), m, m + 1);
    if (Eigen::FullPivLU<Matrix>(c.D).rank() < m) throw ConfigError("D must have rank m", l);
  } else {
    c.D = Matrix::Identity(m, m + 1);
  }
  for (const char* key : {"grid_N", "grid_K"}) {
    const auto& [v, l] = need(key);
    auto xs = detail::parse_list(v, l, key);
    for (double x : xs)
      if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string(key) + " entries must be positive", l);
    if (std::string(key) == "grid_N") {
      for (double x : xs)
        if (x != std::floor(x)) throw ConfigError("grid_N entries must be integers", l);
      c.grid_N = xs;
    } else {
      c.grid_K = xs;
    }
  }
  {
    const auto& [v, l] = need("replications");
    c.replications = static_cast<std::size_t>(detail::parse_unsigned(v, l, "replications"));
    if (c.replications < 2) throw ConfigError("replications must be at least 2", l);
  }
  {
    const auto& [v, l] = need("seed");
    c.seed = detail::parse_unsigned(v, l, "seed");
  }
  if (kv.count("outdir")) c.outdir = kv["outdir"].first;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
  return out;
}

/// The config in its own file format.
inline std::string config_text(const ExperimentConfig& c) {
  std::vector<double> u0(c.u0.data(), c.u0.data() + c.u0.size());
  std::vector<double> d;
  for (Eigen::Index i = 0; i < c.D.rows(); ++i)
    for (Eigen::Index j = 0; j < c.D.cols(); ++j) d.push_back(c.D(i, j));
  std::string s;
  s += "model = " + std::string(to_string(c.model)) + "\n";
  s += "m = " + std::to_string(c.m) + "\n";
  s += "r = " + format_double(c.r) + "\n";
  s += "u0 = " + format_list(u0) + "\n";
  s += "D = " + format_list(d) + "\n";
  s += "grid_N = " + format_list(c.grid_N) + "\n";
  s += "grid_K = " + format_list(c.grid_K) + "\n";
  s += "replications = " + std::to_string(c.replications) + "\n";
  s += "seed = " + std::to_string(c.seed) + "\n";
  s += "outdir = " + c.outdir + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Experiment : std::uint8_t { Nonsequential = 1, Sequential = 2 };

/// seed ^ hash(experiment, cell, replication); independent of scheduling.
inline std::uint64_t replication_seed(std::uint64_t base, Experiment e, std::size_t cell, std::size_t rep) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(e));
  h = splitmix64(h ^ static_cast<std::uint64_t>(cell));
  h = splitmix64(h ^ static_cast<std::uint64_t>(rep));
  return base ^ h;
}

// ---------------------------------------------------------------------------
// Results

struct Sym2 {
  double v11 = 0.0, v12 = 0.0, v22 = 0.0;
  static Sym2 from(const Matrix& a) { return {a(0, 0), 0.5 * (a(0, 1) + a(1, 0)), a(1, 1)}; }
};

struct NonsequentialRow {
  double N = 0.0;
  Sym2 ocov, ocov_se, ocrb, oalb;
  std::size_t excluded = 0;
};

struct SequentialRow {
  double K = 0.0;
  double mst = 0.0, mst_se = 0.0, sdst = 0.0;
  Sym2 ccov, ccov_se, ccrb;
  std::size_t excluded = 0;
};

struct ResultTable {
  std::vector<NonsequentialRow> nonsequential;
  std::vector<SequentialRow> sequential;
  std::size_t replications = 0;
  std::vector<std::pair<std::string, double>> cell_seconds;
};

inline constexpr std::size_t kBatches = 10;
inline constexpr double kExclusionLimit = 0.01;

namespace detail {

/// Runs task(rep) for rep in [0, count) on a small thread pool. Results are
/// written by index, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Standard error of a statistic from contiguous batches of the included
/// replications (in replication order). NaN when fewer than two batches exist.
template <class Stat>
double batched_se(std::size_t count, const Stat& stat) {
  const std::size_t nb = std::min(kBatches, count);
  if (nb < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> vals;
  for (std::size_t b = 0; b < nb; ++b) vals.push_back(stat(b * count / nb, (b + 1) * count / nb));
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(nb);
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(nb - 1) / static_cast<double>(nb));
}

/// Mean outer product of deviations over [lo, hi).
inline Matrix mean_outer(const std::vector<Vector>& dev, std::size_t lo, std::size_t hi) {
  Matrix s = Matrix::Zero(dev.front().size(), dev.front().size());
  for (std::size_t i = lo; i < hi; ++i) s += dev[i] * dev[i].transpose();
  return s / static_cast<double>(hi - lo);
}

inline double wrap_angle(double x) {
  const double two_pi = 2.0 * std::numbers::pi;
  x = std::fmod(x, two_pi);
  if (x <= -std::numbers::pi) x += two_pi;
  if (x > std::numbers::pi) x -= two_pi;
  return x;
}

struct ModelSetup {
  DirectionalModel model;
  CurvedFamily family;
  Gauge gauge;
  QuadricGauge quadric;
  Point u0;
};

inline ModelSetup setup(const ExperimentConfig& c) {
  DirectionalModel model = make_model(c.model, c.m, c.r);
  CurvedFamily fam = model.curved_family();
  Gauge gauge = model.gauge();
  const std::vector<Vector> grid = probe_grid(model, 3, 0.3);
  const Classification cls = classify(fam, grid);
  QuadricGauge q = quadric_gauge(fam, cls, gauge, cls.eta0, c.D, grid);
  return {model, fam, gauge, q, Point(c.u0, Chart::U)};
}

inline std::string cell_name(const char* prefix, double x) { return std::string(prefix) + "=" + format_double(x); }

}  // namespace detail

/// Nonsequential experiment: R replications of N draws per cell, bias-corrected
/// MLE, scaled empirical covariance against g^ab(u0) and the second-order bound.
inline std::vector<NonsequentialRow> run_nonsequential(const ExperimentConfig& c, ResultTable* timing = nullptr) {
  const detail::ModelSetup s = detail::setup(c);
  const Matrix ocrb = crb(s.family, s.u0);
  std::vector<NonsequentialRow> rows;
  for (std::size_t cell = 0; cell < c.grid_N.size(); ++cell) {
    const auto start = std::chrono::steady_clock::now();
    const double n = c.grid_N[cell];
    const auto draws = static_cast<std::size_t>(n);
    std::vector<std::optional<Vector>> dev(c.replications);
    detail::parallel_for(c.replications, c.threads, [&](std::size_t rep) {
      Rng rng(replication_seed(c.seed, Experiment::Nonsequential, cell, rep));
      Trajectory tr(s.model.n());
      for (std::size_t i = 0; i < draws; ++i) tr.push(s.model.sample_unit(s.u0.coords, rng));
      try {
        const Point u_hat = s.model.mle_direction(tr.mean_x());
        Vector d = bias_correct(s.family, u_hat, n).coords - s.u0.coords;
        d(1) = detail::wrap_angle(d(1));
        dev[rep] = d;
      } catch (const MleUndefinedError&) {
      } catch (const ChartError&) {
      } catch (const GaugeSingularityError&) {
      }
    });
    std::vector<Vector> ok;
    for (const auto& d : dev)
      if (d) ok.push_back(*d);
    NonsequentialRow row;
    row.N = n;
    row.excluded = c.replications - ok.size();
    row.ocrb = Sym2::from(ocrb);
    row.oalb = Sym2::from(asymptotic_covariance(s.family, s.u0, n));
    if (!ok.empty()) {
      row.ocov = Sym2::from(n * detail::mean_outer(ok, 0, ok.size()));
      auto comp = [&](int i, int j) {
        return detail::batched_se(ok.size(), [&](std::size_t lo, std::size_t hi) {
          return n * detail::mean_outer(ok, lo, hi)(i, j);
        });
      };
      row.ocov_se = {comp(0, 0), comp(0, 1), comp(1, 1)};
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.ocov = row.ocov_se = {nan, nan, nan};
    }
    rows.push_back(row);
    if (timing)
      timing->cell_seconds.emplace_back(
          detail::cell_name("N", n),
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return rows;
}

/// Sequential experiment: R stopping runs per K, ubar-chart MLE without bias
/// correction, CCOV = E(tau) E[(ubar - ubar0)(ubar - ubar0)'].
inline std::vector<SequentialRow> run_sequential(const ExperimentConfig& c, ResultTable* timing = nullptr) {
  const detail::ModelSetup s = detail::setup(c);
  const Vector ubar0 = s.quadric.coords.map(s.u0.coords);
  const Matrix ccrb = crb_ubar(s.family, s.quadric, s.u0);
  std::vector<SequentialRow> rows;
  for (std::size_t cell = 0; cell < c.grid_K.size(); ++cell) {
    const auto start = std::chrono::steady_clock::now();
    const double k = c.grid_K[cell];
    struct Rep {
      double tau;
      Vector dev;
    };
    std::vector<std::optional<Rep>> reps(c.replications);
    detail::parallel_for(c.replications, c.threads, [&](std::size_t rep) {
      Rng rng(replication_seed(c.seed, Experiment::Sequential, cell, rep));
      try {
        const StoppingResult res = run_stopping(s.model, s.gauge, k, s.u0, rng);
        reps[rep] = Rep{static_cast<double>(res.decision.tau), s.quadric.coords.map(res.u_hat.coords) - ubar0};
      } catch (const RunawayStopError&) {
      } catch (const ChartError&) {
      } catch (const GaugeSingularityError&) {
      }
    });
    std::vector<double> tau;
    std::vector<Vector> dev;
    for (const auto& r : reps)
      if (r) {
        tau.push_back(r->tau);
        dev.push_back(r->dev);
      }
    SequentialRow row;
    row.K = k;
    row.excluded = c.replications - tau.size();
    row.ccrb = Sym2::from(ccrb);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto mean_tau = [&](std::size_t lo, std::size_t hi) {
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) sum += tau[i];
      return sum / static_cast<double>(hi - lo);
    };
    if (!tau.empty()) {
      row.mst = mean_tau(0, tau.size());
      double ss = 0.0;
      for (double t : tau) ss += (t - row.mst) * (t - row.mst);
      row.sdst = tau.size() > 1 ? std::sqrt(ss / static_cast<double>(tau.size() - 1)) : nan;
      row.mst_se = detail::batched_se(tau.size(), mean_tau);
      row.ccov = Sym2::from(row.mst * detail::mean_outer(dev, 0, dev.size()));
      auto comp = [&](int i, int j) {
        return detail::batched_se(dev.size(), [&](std::size_t lo, std::size_t hi) {
          return mean_tau(lo, hi) * detail::mean_outer(dev, lo, hi)(i, j);
        });
      };
      row.ccov_se = {comp(0, 0), comp(0, 1), comp(1, 1)};
    } else {
      row.mst = row.mst_se = row.sdst = nan;
      row.ccov = row.ccov_se = {nan, nan, nan};
    }
    rows.push_back(row);
    if (timing)
      timing->cell_seconds.emplace_back(
          detail::cell_name("K", k),
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return rows;
}

/// Throws ExclusionLimitError when any cell discarded more than 1% of R.
inline void check_exclusions(const ResultTable& t) {
  const double limit = kExclusionLimit * static_cast<double>(t.replications);
  for (const auto& r : t.nonsequential)
    if (static_cast<double>(r.excluded) > limit)
      throw ExclusionLimitError("nonsequential cell N=" + format_double(r.N) + " excluded " +
                                std::to_string(r.excluded) + " of " + std::to_string(t.replications));
  for (const auto& r : t.sequential)
    if (static_cast<double>(r.excluded) > limit)
      throw ExclusionLimitError("sequential cell K=" + format_double(r.K) + " excluded " +
                                std::to_string(r.excluded) + " of " + std::to_string(t.replications));
}

// ---------------------------------------------------------------------------
// Output

inline const std::vector<std::string>& nonsequential_columns() {
  static const std::vector<std::string> cols = {
      "cell_N", "OCOV11", "OCOV12", "OCOV22", "OCOV11_se", "OCOV12_se", "OCOV22_se", "OCRB11",
      "OCRB12", "OCRB22", "OALB11", "OALB12", "OALB22", "excluded"};
  return cols;
}

inline const std::vector<std::string>& sequential_columns() {
  static const std::vector<std::string> cols = {
      "cell_K", "MST", "MST_se", "SDST", "CCOV11", "CCOV12", "CCOV22", "CCOV11_se", "CCOV12_se",
      "CCOV22_se", "CCRB11", "CCRB12", "CCRB22", "excluded"};
  return cols;
}

inline std::string nonsequential_csv(const std::vector<NonsequentialRow>& rows) {
  std::string s;
  for (std::size_t i = 0; i < nonsequential_columns().size(); ++i) s += (i ? "," : "") + nonsequential_columns()[i];
  s += "\n";
  for (const auto& r : rows) {
    const double v[] = {r.N,         r.ocov.v11,   r.ocov.v12, r.ocov.v22, r.ocov_se.v11, r.ocov_se.v12, r.ocov_se.v22,
                        r.ocrb.v11,  r.ocrb.v12,   r.ocrb.v22, r.oalb.v11, r.oalb.v12,    r.oalb.v22};
    for (double x : v) s += format_double(x) + ",";
    s += std::to_string(r.excluded) + "\n";
  }
  return s;
}

inline std::string sequential_csv(const std::vector<SequentialRow>& rows) {
  std::string s;
  for (std::size_t i = 0; i < sequential_columns().size(); ++i) s += (i ? "," : "") + sequential_columns()[i];
  s += "\n";
  for (const auto& r : rows) {
    const double v[] = {r.K,           r.mst,         r.mst_se,      r.sdst,       r.ccov.v11,   r.ccov.v12, r.ccov.v22,
                        r.ccov_se.v11, r.ccov_se.v12, r.ccov_se.v22, r.ccrb.v11,   r.ccrb.v12,   r.ccrb.v22};
    for (double x : v) s += format_double(x) + ",";
    s += std::to_string(r.excluded) + "\n";
  }
  return s;
}

inline constexpr const char* kNonsequentialFile = "nonsequential.csv";
inline constexpr const char* kSequentialFile = "sequential.csv";
inline constexpr const char* kManifestFile = "run.manifest";

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

inline std::string utc_stamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

struct RunTimes {
  std::chrono::system_clock::time_point start;
  std::chrono::system_clock::time_point end;
};

/// Writes both CSVs and run.manifest into `dir`. The manifest is itself a
/// valid config file; run metadata is carried in comment lines.
inline void write_results(const ResultTable& t, const ExperimentConfig& c, const std::filesystem::path& dir,
                          const RunTimes& times) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  detail::write_file(dir / kNonsequentialFile, nonsequential_csv(t.nonsequential));
  detail::write_file(dir / kSequentialFile, sequential_csv(t.sequential));
  std::string m = "# confgeom run manifest\n";
  m += "# version = " + std::string(kVersion) + "\n";
  m += "# seed = " + std::to_string(c.seed) + "\n";
  m += "# start = " + detail::utc_stamp(times.start) + "\n";
  m += "# end = " + detail::utc_stamp(times.end) + "\n";
  m += "# wall_seconds = " + format_double(std::chrono::duration<double>(times.end - times.start).count()) + "\n";
  for (const auto& [cell, sec] : t.cell_seconds) m += "# cell " + cell + " seconds = " + format_double(sec) + "\n";
  m += config_text(c);
  detail::write_file(dir / kManifestFile, m);
}

/// Runs both experiments. Exclusions are checked by the caller after writing.
inline ResultTable run_experiment(const ExperimentConfig& c) {
  ResultTable t;
  t.replications = c.replications;
  t.nonsequential = run_nonsequential(c, &t);
  t.sequential = run_sequential(c, &t);
  return t;
}

}  // namespace confgeom
