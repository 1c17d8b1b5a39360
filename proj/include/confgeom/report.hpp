#pragma once

// Result readers, statistical gates over simulation output, and the
// geometry verification report with its JSON form.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confgeom/conformal.hpp"
#include "confgeom/errors.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/harness.hpp"
#include "confgeom/models.hpp"

namespace confgeom {

// ---------------------------------------------------------------------------
// CSV readers

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Rows of a CSV keyed by column name; every required column must exist
/// and every row must carry all of them.
inline std::vector<std::map<std::string, double>> read_csv(const std::filesystem::path& path,
                                                           const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.filename().string() + ": missing header; expected column '" + required.front() + "'");
  const std::vector<std::string> header = split_csv_line(trim(line));
  for (const auto& col : required)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw SchemaError(path.filename().string() + ": missing column '" + col + "'");
  std::vector<std::map<std::string, double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    std::map<std::string, double> row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i >= fields.size() || fields[i].empty())
        throw SchemaError(path.filename().string() + " line " + std::to_string(lineno) + ": missing value for column '" +
                          header[i] + "'");
      char* end = nullptr;
      const double v = std::strtod(fields[i].c_str(), &end);
      if (end == fields[i].c_str() || *end != '\0')
        throw SchemaError(path.filename().string() + " line " + std::to_string(lineno) + ": column '" + header[i] +
                          "' is not numeric");
      row[header[i]] = v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

struct ResultSet {
  ExperimentConfig config;
  ResultTable table;
};

inline ResultSet read_results(const std::filesystem::path& dir) {
  ResultSet rs;
  const auto manifest = dir / kManifestFile;
  if (!std::filesystem::exists(manifest)) throw IoError("missing " + manifest.string());
  rs.config = load_config(manifest);
  rs.table.replications = rs.config.replications;
  for (const auto& r : detail::read_csv(dir / kNonsequentialFile, nonsequential_columns())) {
    NonsequentialRow row;
    row.N = r.at("cell_N");
    row.ocov = {r.at("OCOV11"), r.at("OCOV12"), r.at("OCOV22")};
    row.ocov_se = {r.at("OCOV11_se"), r.at("OCOV12_se"), r.at("OCOV22_se")};
    row.ocrb = {r.at("OCRB11"), r.at("OCRB12"), r.at("OCRB22")};
    row.oalb = {r.at("OALB11"), r.at("OALB12"), r.at("OALB22")};
    row.excluded = static_cast<std::size_t>(r.at("excluded"));
    rs.table.nonsequential.push_back(row);
  }
  for (const auto& r : detail::read_csv(dir / kSequentialFile, sequential_columns())) {
    SequentialRow row;
    row.K = r.at("cell_K");
    row.mst = r.at("MST");
    row.mst_se = r.at("MST_se");
    row.sdst = r.at("SDST");
    row.ccov = {r.at("CCOV11"), r.at("CCOV12"), r.at("CCOV22")};
    row.ccov_se = {r.at("CCOV11_se"), r.at("CCOV12_se"), r.at("CCOV22_se")};
    row.ccrb = {r.at("CCRB11"), r.at("CCRB12"), r.at("CCRB22")};
    row.excluded = static_cast<std::size_t>(r.at("excluded"));
    rs.table.sequential.push_back(row);
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Gates

enum class GateStatus : std::uint8_t { Pass, Fail, Inconclusive };

constexpr std::string_view to_string(GateStatus s) {
  switch (s) {
    case GateStatus::Pass: return "PASS";
    case GateStatus::Fail: return "FAIL";
    case GateStatus::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct Gate {
  std::string name;
  GateStatus status = GateStatus::Pass;
  std::string detail;
  bool exclusion = false;  // failure maps to the exclusion exit code
};

struct GateOptions {
  double se_multiple = 3.0;
  double sdst_ratio_tolerance = 0.30;
  std::size_t min_replications = 10;
};

namespace detail {

/// |value - bound| <= k SE. Inconclusive when the SE is missing or so wide
/// that k SE reaches the scale of the bound. Off-diagonal bounds use
/// sqrt(b11 b22) as their scale because they may be zero.
inline Gate se_gate(std::string name, double value, double se, double bound, double scale, std::size_t included,
                    const GateOptions& opt) {
  Gate g;
  g.name = std::move(name);
  const double dev = value - bound;
  g.detail = "value=" + format_double(value) + " bound=" + format_double(bound) + " se=" + format_double(se) +
             " z=" + format_double(se > 0.0 ? dev / se : std::numeric_limits<double>::quiet_NaN());
  if (included < opt.min_replications || !std::isfinite(se) || !std::isfinite(value) ||
      opt.se_multiple * se >= std::abs(scale)) {
    g.status = GateStatus::Inconclusive;
    g.detail += " (SE too wide)";
    return g;
  }
  g.status = std::abs(dev) <= opt.se_multiple * se ? GateStatus::Pass : GateStatus::Fail;
  return g;
}

inline std::vector<std::size_t> largest_two(const std::vector<double>& cells) {
  std::vector<std::size_t> idx(cells.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return cells[a] > cells[b]; });
  if (idx.size() > 2) idx.resize(2);
  return idx;
}

}  // namespace detail

inline std::vector<Gate> evaluate_gates(const ResultSet& rs, const GateOptions& opt = {}) {
  std::vector<Gate> gates;
  const auto& cfg = rs.config;
  const DirectionalModel model = make_model(cfg.model, cfg.m, cfg.r);
  const double nu0 = model.gauge().value(cfg.u0);
  const double c = model.stopping_constant();
  const std::size_t reps = rs.table.replications;
  const char* comp[] = {"11", "12", "22"};
  auto pick = [](const Sym2& s, int i) { return i == 0 ? s.v11 : i == 1 ? s.v12 : s.v22; };
  auto scale = [&](const Sym2& b, int i) { return i == 1 ? std::sqrt(std::abs(b.v11 * b.v22)) : pick(b, i); };

  std::vector<double> ks;
  for (const auto& r : rs.table.sequential) ks.push_back(r.K);
  for (std::size_t idx : detail::largest_two(ks)) {
    const auto& r = rs.table.sequential[idx];
    for (int i = 0; i < 3; ++i)
      gates.push_back(detail::se_gate("CCOV" + std::string(comp[i]) + " ~ CCRB at K=" + format_double(r.K),
                                      pick(r.ccov, i), pick(r.ccov_se, i), pick(r.ccrb, i), scale(r.ccrb, i),
                                      reps - r.excluded, opt));
  }
  for (const auto& r : rs.table.sequential) {
    const double target = r.K * nu0 + c;
    gates.push_back(detail::se_gate("MST ~ K nu(u0) + c at K=" + format_double(r.K), r.mst, r.mst_se, target, target,
                                    reps - r.excluded, opt));
  }
  {
    const auto idx = detail::largest_two(ks);
    Gate g;
    g.name = "SDST/sqrt(K) stable across the two largest K";
    if (idx.size() < 2) {
      g.status = GateStatus::Inconclusive;
      g.detail = "fewer than two K cells";
    } else {
      const auto& a = rs.table.sequential[idx[0]];
      const auto& b = rs.table.sequential[idx[1]];
      const double ra = a.sdst / std::sqrt(a.K);
      const double rb = b.sdst / std::sqrt(b.K);
      const double rel = std::abs(ra / rb - 1.0);
      g.detail = "ratios " + format_double(ra) + " and " + format_double(rb) + ", relative change " + format_double(rel);
      if (!std::isfinite(rel) || reps - a.excluded < opt.min_replications) {
        g.status = GateStatus::Inconclusive;
      } else {
        g.status = rel <= opt.sdst_ratio_tolerance ? GateStatus::Pass : GateStatus::Fail;
      }
    }
    gates.push_back(g);
  }

  std::vector<double> ns;
  for (const auto& r : rs.table.nonsequential) ns.push_back(r.N);
  for (std::size_t idx : detail::largest_two(ns)) {
    const auto& r = rs.table.nonsequential[idx];
    for (int i = 0; i < 3; ++i)
      gates.push_back(detail::se_gate("OCOV" + std::string(comp[i]) + " ~ OALB at N=" + format_double(r.N),
                                      pick(r.ocov, i), pick(r.ocov_se, i), pick(r.oalb, i), scale(r.oalb, i),
                                      reps - r.excluded, opt));
    Gate g;
    g.name = "OALB - OCRB > 0 at N=" + format_double(r.N);
    const double d11 = r.oalb.v11 - r.ocrb.v11;
    const double d22 = r.oalb.v22 - r.ocrb.v22;
    const double d12 = r.oalb.v12 - r.ocrb.v12;
    const bool pd = d11 > 0.0 && d22 > 0.0 && d11 * d22 - d12 * d12 > 0.0;
    g.status = pd ? GateStatus::Pass : GateStatus::Fail;
    g.detail = "diag " + format_double(d11) + ", " + format_double(d22);
    gates.push_back(g);
  }

  auto exclusion_gate = [&](const std::string& cell, std::size_t excluded) {
    Gate g;
    g.name = "exclusions <= 1% at " + cell;
    g.exclusion = true;
    g.detail = std::to_string(excluded) + " of " + std::to_string(reps);
    g.status = static_cast<double>(excluded) <= kExclusionLimit * static_cast<double>(reps) ? GateStatus::Pass
                                                                                             : GateStatus::Fail;
    return g;
  };
  for (const auto& r : rs.table.nonsequential) gates.push_back(exclusion_gate("N=" + format_double(r.N), r.excluded));
  for (const auto& r : rs.table.sequential) gates.push_back(exclusion_gate("K=" + format_double(r.K), r.excluded));
  return gates;
}

// ---------------------------------------------------------------------------
// Geometry report

struct GeometryTolerances {
  double classify = 1e-6;
  double closed_form = 1e-8;  // relative
  double weyl = 1e-4;
  double gauge_pde = 1e-6;
  double gamma_bar = 1e-5;
  double h_bar = 1e-6;
};

struct GeometryReport {
  std::string model;
  std::size_t m = 0;
  double r = 0.0;
  double r_dagger = 0.0;
  std::size_t probe_points = 0;

  bool umbilic = false;
  double umbilic_residual = 0.0;
  bool es_symmetric = false;
  double es_epsilon = 0.0;
  double es_residual = 0.0;
  bool dual_quadric = false;
  double dual_quadric_residual = 0.0;
  double k0 = 0.0;
  double l0 = 0.0;
  bool constant_curvature = false;
  double lambda = 0.0;
  double lambda_expected = 0.0;
  double constant_curvature_residual = 0.0;
  double metric_residual = 0.0;  // relative, against the closed form
  double h_residual = 0.0;       // relative, H^(+-1) against the closed forms

  std::string weyl_criterion;
  double w4 = 0.0;
  double w3 = 0.0;
  double w2 = 0.0;
  bool conformally_flat = false;

  double gauge_pde_residual = 0.0;
  double gamma_bar_residual = 0.0;
  double h_bar_residual = 0.0;

  bool pass = false;
  std::string verdict;
};

inline GeometryReport geometry_report(ModelKind kind, std::size_t m, double r, std::size_t density,
                                      const GeometryTolerances& tol = {}) {
  const DirectionalModel model = make_model(kind, m, r);
  const CurvedFamily fam = model.curved_family();
  const std::vector<Vector> grid = probe_grid(model, density, 0.3);
  if (grid.empty()) throw ParameterError("probe grid is empty");

  GeometryReport g;
  g.model = std::string(model.name());
  g.m = m;
  g.r = r;
  g.r_dagger = model.r_dagger();
  g.probe_points = grid.size();

  ClassifyOptions copt;
  copt.tolerance = tol.classify;
  const Classification cls = classify(fam, grid, copt);
  g.umbilic = cls.umbilic.flag;
  g.umbilic_residual = cls.umbilic.residual;
  g.es_symmetric = cls.es_symmetric.flag;
  g.es_epsilon = cls.es_epsilon;
  g.es_residual = cls.es_symmetric.residual;
  g.dual_quadric = cls.dual_quadric.flag;
  g.dual_quadric_residual = cls.dual_quadric.residual;
  g.k0 = cls.k0;
  g.l0 = cls.l0;
  g.constant_curvature = cls.constant_curvature.flag;
  g.constant_curvature_residual = cls.constant_curvature.residual;
  g.lambda = cls.lambda;
  g.lambda_expected = model.curvature_constant();

  const double hm1_scale = model.hyperbolic() ? 1.0 : -1.0;
  for (const Vector& u : grid) {
    const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
    const Matrix gc = model.metric(u);
    const double gs = gc.cwiseAbs().maxCoeff();
    g.metric_residual = std::max(g.metric_residual, (lg.g - gc).cwiseAbs().maxCoeff() / gs);
    const EsCurvature es = es_curvature(lg);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        const double gab = gc(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        const double h1 = -gab / model.r_dagger();
        const double hm1 = hm1_scale * gab / model.r();
        g.h_residual = std::max(g.h_residual, std::abs(es.h1(a, b, 0) - h1) / (gs / model.r_dagger()));
        g.h_residual = std::max(g.h_residual, std::abs(es.hm1(a, b, 0) - hm1) / (gs / model.r()));
      }
  }

  const FlatnessVerdict fv = flatness_test(as_chart(fam), grid, tol.weyl);
  g.weyl_criterion = fv.criterion;
  g.w4 = fv.w4;
  g.w3 = fv.w3;
  g.w2 = fv.w2;
  g.conformally_flat = fv.flat;

  const Gauge gauge = model.gauge();
  if (cls.dual_quadric.flag) {
    const auto mi = static_cast<Eigen::Index>(m);
    QuadricGaugeOptions qopt;
    qopt.tolerance = std::numeric_limits<double>::infinity();
    const QuadricGauge q = quadric_gauge(fam, cls, gauge, cls.eta0, Matrix::Identity(mi, mi + 1), grid, qopt);
    g.gauge_pde_residual = q.pde_residual;
    for (const Vector& u : grid) {
      g.gamma_bar_residual = std::max(g.gamma_bar_residual, ubar_connection(fam, q, u).max_abs());
      g.h_bar_residual = std::max(g.h_bar_residual, conformal_sub_quantities(fam, gauge, u).h_bar.max_abs());
    }
  } else {
    g.gauge_pde_residual = g.gamma_bar_residual = g.h_bar_residual = std::numeric_limits<double>::infinity();
  }

  const double lambda_rel = std::abs(g.lambda - g.lambda_expected) / std::abs(g.lambda_expected);
  g.pass = g.umbilic && g.es_symmetric && g.dual_quadric && g.constant_curvature && g.conformally_flat &&
           g.metric_residual <= tol.closed_form && g.h_residual <= tol.closed_form &&
           lambda_rel <= tol.closed_form && g.gauge_pde_residual <= tol.gauge_pde &&
           g.gamma_bar_residual <= tol.gamma_bar && g.h_bar_residual <= tol.h_bar;

  std::string v = g.conformally_flat ? "conformally m(e)-flat" : "not conformally m(e)-flat";
  if (g.dual_quadric) v += "; dual quadric";
  if (g.umbilic) v += "; totally e-umbilic";
  if (g.constant_curvature)
    v += std::string("; lambda = ") + (g.lambda_expected < 0.0 ? "-" : "") + "1/(r r_dagger) = " + format_double(g.lambda);
  g.verdict = v;
  return g;
}

inline nlohmann::json to_json(const GeometryReport& g) {
  nlohmann::json j;
  j["model"] = g.model;
  j["m"] = g.m;
  j["r"] = g.r;
  j["r_dagger"] = g.r_dagger;
  j["probe_points"] = g.probe_points;
  j["classification"] = {{"umbilic", g.umbilic},
                         {"umbilic_residual", g.umbilic_residual},
                         {"es_symmetric", g.es_symmetric},
                         {"es_epsilon", g.es_epsilon},
                         {"es_residual", g.es_residual},
                         {"dual_quadric", g.dual_quadric},
                         {"dual_quadric_residual", g.dual_quadric_residual},
                         {"k0", g.k0},
                         {"l0", g.l0},
                         {"constant_curvature", g.constant_curvature},
                         {"constant_curvature_residual", g.constant_curvature_residual},
                         {"lambda", g.lambda},
                         {"lambda_expected", g.lambda_expected}};
  j["closed_form"] = {{"metric_residual", g.metric_residual}, {"h_residual", g.h_residual}};
  j["weyl_schouten"] = {{"criterion", g.weyl_criterion}, {"w4", g.w4}, {"w3", g.w3}, {"w2", g.w2},
                        {"conformally_flat", g.conformally_flat}};
  j["gauge"] = {{"pde_residual", g.gauge_pde_residual},
                {"gamma_bar_residual", g.gamma_bar_residual},
                {"h_bar_residual", g.h_bar_residual}};
  j["pass"] = g.pass;
  j["verdict"] = g.verdict;
  return j;
}

inline GeometryReport geometry_report_from_json(const nlohmann::json& j) {
  try {
    GeometryReport g;
    g.model = j.at("model").get<std::string>();
    g.m = j.at("m").get<std::size_t>();
    g.r = j.at("r").get<double>();
    g.r_dagger = j.at("r_dagger").get<double>();
    g.probe_points = j.at("probe_points").get<std::size_t>();
    const auto& c = j.at("classification");
    g.umbilic = c.at("umbilic").get<bool>();
    g.umbilic_residual = c.at("umbilic_residual").get<double>();
    g.es_symmetric = c.at("es_symmetric").get<bool>();
    g.es_epsilon = c.at("es_epsilon").get<double>();
    g.es_residual = c.at("es_residual").get<double>();
    g.dual_quadric = c.at("dual_quadric").get<bool>();
    g.dual_quadric_residual = c.at("dual_quadric_residual").get<double>();
    g.k0 = c.at("k0").get<double>();
    g.l0 = c.at("l0").get<double>();
    g.constant_curvature = c.at("constant_curvature").get<bool>();
    g.constant_curvature_residual = c.at("constant_curvature_residual").get<double>();
    g.lambda = c.at("lambda").get<double>();
    g.lambda_expected = c.at("lambda_expected").get<double>();
    g.metric_residual = j.at("closed_form").at("metric_residual").get<double>();
    g.h_residual = j.at("closed_form").at("h_residual").get<double>();
    const auto& w = j.at("weyl_schouten");
    g.weyl_criterion = w.at("criterion").get<std::string>();
    g.w4 = w.at("w4").get<double>();
    g.w3 = w.at("w3").get<double>();
    g.w2 = w.at("w2").get<double>();
    g.conformally_flat = w.at("conformally_flat").get<bool>();
    const auto& ga = j.at("gauge");
    g.gauge_pde_residual = ga.at("pde_residual").get<double>();
    g.gamma_bar_residual = ga.at("gamma_bar_residual").get<double>();
    g.h_bar_residual = ga.at("h_bar_residual").get<double>();
    g.pass = j.at("pass").get<bool>();
    g.verdict = j.at("verdict").get<std::string>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("geometry report: ") + e.what());
  }
}

inline std::string geometry_text(const GeometryReport& g) {
  std::string s;
  auto line = [&s](const std::string& k, const std::string& v) { s += k + ": " + v + "\n"; };
  auto flag = [](bool b, double res) { return std::string(b ? "yes" : "no") + " (residual " + format_double(res) + ")"; };
  line("model", g.model + " m=" + std::to_string(g.m) + " r=" + format_double(g.r));
  line("r_dagger", format_double(g.r_dagger));
  line("probe points", std::to_string(g.probe_points));
  line("totally e-umbilic", flag(g.umbilic, g.umbilic_residual));
  line("ES conjugate symmetric", flag(g.es_symmetric, g.es_residual) + " epsilon=" + format_double(g.es_epsilon));
  line("dual quadric", flag(g.dual_quadric, g.dual_quadric_residual) + " k0=" + format_double(g.k0) +
                           " l0=" + format_double(g.l0));
  line("constant curvature", flag(g.constant_curvature, g.constant_curvature_residual) +
                                 " lambda=" + format_double(g.lambda) + " expected=" + format_double(g.lambda_expected));
  line("closed-form metric residual", format_double(g.metric_residual));
  line("closed-form H residual", format_double(g.h_residual));
  line("Weyl-Schouten (" + g.weyl_criterion + ")",
       "W4=" + format_double(g.w4) + " W3=" + format_double(g.w3) + " W2=" + format_double(g.w2));
  line("gauge PDE residual", format_double(g.gauge_pde_residual));
  line("Gamma-bar(-1) in ubar", format_double(g.gamma_bar_residual));
  line("H-bar(1) with s_kappa = H(1)", format_double(g.h_bar_residual));
  line("verdict", g.verdict);
  line("status", g.pass ? "PASS" : "FAIL");
  return s;
}

}  // namespace confgeom
