// Acceptance run: one PASS/FAIL line per criterion. Exits 1 if a criterion
// fails that is not listed with --known-failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "confgeom.hpp"

using namespace confgeom;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

// Probe sets -----------------------------------------------------------------

std::vector<Vector> theta_probes(std::size_t n, std::size_t count, bool minkowski, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> out;
  while (out.size() < count) {
    Vector th(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < th.size(); ++i) th(i) = 2.0 * uniform01(rng) - 1.0;
    if (minkowski) {
      th(0) = -(th.tail(th.size() - 1).norm() + 0.5 + uniform01(rng));
    } else if (th.norm() < 0.3) {
      continue;
    }
    out.push_back(th);
  }
  return out;
}

std::vector<Vector> chart_probes(const DirectionalModel& model, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> out;
  const std::size_t m = model.m();
  while (out.size() < count) {
    Vector u(static_cast<Eigen::Index>(m));
    for (std::size_t a = 0; a < m; ++a) {
      double lo = 0.2, hi = kPi - 0.2;
      if (a == 0 && model.hyperbolic()) hi = 1.5;
      if (a + 1 == m) hi = 2.0 * kPi - 0.2;
      u(static_cast<Eigen::Index>(a)) = lo + (hi - lo) * uniform01(rng);
    }
    if (std::abs(std::sin(u(static_cast<Eigen::Index>(m) - 1))) < 0.2) continue;
    out.push_back(u);
  }
  return out;
}

struct Ambient {
  ExponentialFamily fam;
  bool minkowski;
};

std::vector<Ambient> ambient_families() {
  return {{gaussian_family(3), false}, {poisson_family(3), false}, {vmf_ambient(2), false}, {hyperboloid_ambient(2), true}};
}

struct ModelCase {
  ModelKind kind;
  std::size_t m;
  double r;
};

const std::vector<ModelCase> kModelCases = {
    {ModelKind::Vmf, 2, 0.25}, {ModelKind::Vmf, 3, 1.5}, {ModelKind::Hyperboloid, 2, 0.1}, {ModelKind::Hyperboloid, 3, 2.0}};

std::string label(const ModelCase& c) {
  return std::string(to_string(c.kind)) + " m=" + std::to_string(c.m) + " r=" + format_double(c.r);
}

double series_i_ratio(double nu, double x) {
  auto series = [x](double order) {
    double s = 0.0;
    for (int k = 0; k < 30; ++k)
      s += std::pow(x / 2.0, 2.0 * k + order) / (std::tgamma(k + 1.0) * std::tgamma(k + order + 1.0));
    return s;
  };
  return series(nu + 1.0) / series(nu);
}

// Geometry criteria ------------------------------------------------------------

Outcome flatness() {
  double worst = 0.0;
  for (const Ambient& a : ambient_families()) {
    const StatisticalChart tc = theta_chart(a.fam);
    const StatisticalChart ec = eta_chart(a.fam);
    for (const Vector& th : theta_probes(a.fam.n, 20, a.minkowski, 5)) {
      const Point pt(th, Chart::Theta);
      const Point pe = eta_of_theta(a.fam, pt);
      for (double alpha : {1.0, -1.0}) {
        worst = std::max(worst, rc_curvature(tc, alpha, pt).max_abs());
        worst = std::max(worst, rc_curvature(ec, alpha, pe).max_abs());
      }
    }
  }
  return {worst <= 1e-5, "max |R^(+-1)| = " + sci(worst) + " (tol 1e-5, 4 families x 20 points, both charts)"};
}

Outcome duality() {
  const Vector a = make_vector({0.3, -0.2, 0.5});
  auto gauges = [&a](std::size_t n) {
    return std::vector<Gauge>{
        constant_gauge(n, Chart::Theta, 2.5),
        exp_gauge(
            n, Chart::Theta, [a](const Vector& th) { return a.dot(th); }, [a](const Vector&) { return a; },
            [n](const Vector&) {
              return Matrix(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
            }),
        exp_gauge(n, Chart::Theta, [](const Vector& th) { return 0.3 * std::sin(th(0)) + 0.2 * th(0) * th(1); }),
    };
  };
  double conn = 0.0, curv = 0.0;
  for (const Ambient& am : ambient_families()) {
    std::vector<StatisticalChart> charts = {theta_chart(am.fam)};
    for (const Gauge& g : gauges(am.fam.n)) charts.push_back(conformal_chart(theta_chart(am.fam), g));
    for (const StatisticalChart& c : charts)
      for (const Vector& th : theta_probes(am.fam.n, 3, am.minkowski, 7)) {
        const Point pt(th, Chart::Theta);
        for (double alpha : {1.0, 0.5, 0.0}) {
          conn = std::max(conn, duality_residual(c, alpha, pt));
          curv = std::max(curv, curvature_duality_residual(rc_curvature(c, alpha, pt), rc_curvature(c, -alpha, pt)));
        }
      }
  }
  return {conn <= 1e-6 && curv <= 1e-4, "connection residual " + sci(conn) + " (tol 1e-6), curvature residual " +
                                            sci(curv) + " (tol 1e-4); untransformed and 3 gauges"};
}

Outcome closed_forms() {
  double worst = 0.0;
  for (const ModelCase& mc : kModelCases) {
    const DirectionalModel model = make_model(mc.kind, mc.m, mc.r);
    const CurvedFamily fam = model.curved_family();
    const double rd = model.r_dagger();
    const double sign = model.hyperbolic() ? -1.0 : 1.0;
    const double lambda = sign / (mc.r * rd);
    worst = std::max(worst, std::abs(model.curvature_constant() - lambda) / std::abs(lambda));
    for (const Vector& u : chart_probes(model, 20, 17)) {
      const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
      Vector diag(static_cast<Eigen::Index>(mc.m));
      double prod = 1.0;
      for (std::size_t a = 0; a < mc.m; ++a) {
        const auto aa = static_cast<Eigen::Index>(a);
        diag(aa) = mc.r * rd * prod;
        const double s = a == 0 && model.hyperbolic() ? std::sinh(u(aa)) : std::sin(u(aa));
        prod *= s * s;
      }
      const Matrix gc = diag.asDiagonal();
      worst = std::max(worst, (lg.g - gc).cwiseAbs().maxCoeff() / gc.cwiseAbs().maxCoeff());
      const EsCurvature es = es_curvature(lg);
      const CurvaturePair rc = gauss_curvature(es, mc.m);
      for (std::size_t a = 0; a < mc.m; ++a)
        for (std::size_t b = 0; b < mc.m; ++b) {
          const auto aa = static_cast<Eigen::Index>(a);
          const auto bb = static_cast<Eigen::Index>(b);
          worst = std::max(worst, std::abs(es.h1(a, b, 0) + gc(aa, bb) / rd) / (gc(aa, aa) / rd));
          worst = std::max(worst, std::abs(es.hm1(a, b, 0) + sign * gc(aa, bb) / mc.r) / (gc(aa, aa) / mc.r));
          if (a == b) continue;
          const double want = lambda * gc(aa, aa) * gc(bb, bb);
          worst = std::max(worst, std::abs(rc.r1(a, b, b, a) - want) / std::abs(want));
          worst = std::max(worst, std::abs(rc.rm1(a, b, b, a) - want) / std::abs(want));
        }
    }
  }
  double vmf_rd = 0.0;
  bool hyp_exact = true;
  for (double r : {0.05, 0.25, 1.0, 4.0, 10.0}) {
    vmf_rd = std::max(vmf_rd, std::abs(VmfModel(2, r).r_dagger() - series_i_ratio(0.5, r)));
    vmf_rd = std::max(vmf_rd, std::abs(VmfModel(3, r).r_dagger() - series_i_ratio(1.0, r)));
    hyp_exact = hyp_exact && HyperboloidModel(2, r).r_dagger() == 1.0 + 1.0 / r;
  }
  return {worst <= 1e-8 && vmf_rd <= 1e-10 && hyp_exact,
          "max relative error " + sci(worst) + " (tol 1e-8); vMF r_dagger vs series " + sci(vmf_rd) +
              " (tol 1e-10); hyperboloid r_dagger = 1 + 1/r exact: " + (hyp_exact ? "yes" : "no")};
}

Outcome gauss_equation() {
  double worst = 0.0;
  for (const ModelCase& mc : kModelCases) {
    const DirectionalModel model = make_model(mc.kind, mc.m, mc.r);
    const CurvedFamily fam = model.curved_family();
    const StatisticalChart chart = as_chart(fam);
    for (const Vector& u : chart_probes(model, 5, 23)) {
      const Point p(u, Chart::U);
      const CurvaturePair gc = gauss_curvature(fam, p);
      const double scale = std::max(1.0, gc.rm1.max_abs());
      worst = std::max(worst, max_abs_diff(rc_curvature(chart, 1.0, p), gc.r1) / scale);
      worst = std::max(worst, max_abs_diff(rc_curvature(chart, -1.0, p), gc.rm1) / scale);
    }
  }
  return {worst <= 1e-4, "max |R_gauss - R_direct| / max(1, |R|) = " + sci(worst) + " (tol 1e-4)"};
}

Outcome dual_quadric() {
  double worst = 0.0;
  bool flags = true;
  std::string which;
  for (const ModelCase& mc : {kModelCases[0], kModelCases[2]}) {
    const DirectionalModel model = make_model(mc.kind, mc.m, mc.r);
    const CurvedFamily fam = model.curved_family();
    const std::vector<Vector> grid = probe_grid(model, 5, 0.3);
    const Classification cls = classify(fam, grid);
    const bool ok = cls.umbilic.flag && cls.es_symmetric.flag && cls.dual_quadric.flag;
    if (!ok) which += " " + label(mc);
    flags = flags && ok;
    const double target = 1.0 / (cls.k0 * cls.l0);
    for (const Vector& u : grid) {
      const double lhs = (model.theta(u) - cls.theta0).dot(model.eta(u) - cls.eta0);
      worst = std::max(worst, std::abs(lhs - target) / std::max(1.0, std::abs(target)));
    }
  }
  return {worst <= 1e-8 && flags, "identity residual " + sci(worst) + " (tol 1e-8); umbilic/eps-symmetric/dual-quadric " +
                                      (flags ? "all true" : "false for" + which)};
}

Outcome conformal_flatness() {
  double weyl = 0.0, pde = 0.0, gbar = 0.0, hbar = 0.0;
  for (const ModelCase& mc : {ModelCase{ModelKind::Vmf, 2, 0.25}, ModelCase{ModelKind::Vmf, 3, 0.25},
                              ModelCase{ModelKind::Hyperboloid, 2, 0.1}}) {
    const DirectionalModel model = make_model(mc.kind, mc.m, mc.r);
    const CurvedFamily fam = model.curved_family();
    const std::vector<Vector> grid = probe_grid(model, 3, 0.3);
    weyl = std::max(weyl, flatness_test(as_chart(fam), grid, 1e-4).residual);
    if (mc.m != 2) continue;
    const Classification cls = classify(fam, grid);
    const Matrix d = Matrix::Identity(2, 3) * (model.hyperbolic() ? 0.01 : 1.0);
    QuadricGaugeOptions opt;
    opt.tolerance = std::numeric_limits<double>::infinity();
    const QuadricGauge q = quadric_gauge(fam, cls, model.gauge(), cls.eta0, d, grid, opt);
    pde = std::max(pde, q.pde_residual);
    for (const Vector& u : grid) {
      gbar = std::max(gbar, ubar_connection(fam, q, u).max_abs());
      hbar = std::max(hbar, conformal_sub_quantities(fam, model.gauge(), u).h_bar.max_abs());
    }
  }
  return {weyl <= 1e-4 && pde <= 1e-6 && gbar <= 1e-5 && hbar <= 1e-6,
          "Weyl-Schouten " + sci(weyl) + " (tol 1e-4), gauge PDE " + sci(pde) + " (tol 1e-6), Gamma-bar " + sci(gbar) +
              " (tol 1e-5), H-bar " + sci(hbar) + " (tol 1e-6)"};
}

Outcome gaussian_expfam_gauge() {
  const ExponentialFamily fam = gaussian_family(1);
  const ExpfamGauge eg = expfam_gauge(fam, 1.0, make_vector({0.5}), make_vector({0.2}), Matrix::Constant(1, 1, 2.0),
                                      {make_vector({-1.0}), make_vector({3.0})});
  double legendre = 0.0, curv = 0.0;
  const StatisticalChart cc = conformal_chart(eta_chart(fam), eg.gauge);
  for (double h : {0.1, 0.5, 1.0, 1.7, 2.5}) {
    const Vector hv = make_vector({h});
    const Vector xi = eg.coords.dual(hv);
    legendre = std::max(legendre, std::abs(eg.coords.psi_bar(xi) + eg.coords.phi_bar(hv) - xi.dot(hv)));
    const Point p(eg.coords.inverse(hv), Chart::Eta);
    curv = std::max({curv, rc_curvature(cc, 1.0, p).max_abs(), rc_curvature(cc, -1.0, p).max_abs()});
  }
  return {legendre <= 1e-8 && curv <= 1e-5, "c0=1 c=0.5 d=0.2 D=2: Legendre residual " + sci(legendre) +
                                                " (tol 1e-8), |R-bar^(+-1)| " + sci(curv) + " (tol 1e-5)"};
}

Outcome sampler() {
  constexpr int kDraws = 100000;
  double worst_z = 0.0;
  for (ModelKind kind : {ModelKind::Vmf, ModelKind::Hyperboloid}) {
    const DirectionalModel model = make_model(kind, 2, kind == ModelKind::Vmf ? 0.25 : 0.1);
    const Vector u0 = kind == ModelKind::Vmf ? make_vector({kPi / 6, kPi / 3}) : make_vector({0.1, kPi / 3});
    Rng rng(8);
    Vector s1 = Vector::Zero(3), s2 = Vector::Zero(3);
    for (int i = 0; i < kDraws; ++i) {
      const Vector x = model.sample_unit(u0, rng);
      s1 += x;
      s2 += x.cwiseProduct(x);
    }
    const Vector mean = s1 / kDraws;
    const Vector var = s2 / kDraws - mean.cwiseProduct(mean);
    const Vector target = model.r_dagger() * model.xi(u0);
    for (Eigen::Index i = 0; i < 3; ++i)
      worst_z = std::max(worst_z, std::abs(mean(i) - target(i)) / std::sqrt(var(i) / kDraws));
  }
  return {worst_z <= 3.0, "max |z| over components = " + fixed2(worst_z) +
                              " (tol 3 SE, 1e5 draws per model)"};
}

// Simulation criteria ------------------------------------------------------------

struct SimulationRun {
  std::string name;
  std::vector<Gate> gates;
  double seconds = 0.0;
};

Outcome collect(const std::vector<SimulationRun>& runs, const std::function<bool(const Gate&)>& pick) {
  Outcome o{true, ""};
  std::size_t n = 0;
  for (const SimulationRun& run : runs)
    for (const Gate& g : run.gates) {
      if (!pick(g)) continue;
      ++n;
      if (g.status != GateStatus::Pass) {
        o.pass = false;
        o.detail += "; " + run.name + " " + g.name + " " + std::string(to_string(g.status)) + " " + g.detail;
      }
    }
  if (n == 0) return {false, "no gates evaluated"};
  o.detail = std::to_string(n) + " gates" + (o.pass ? " all PASS" : o.detail);
  return o;
}

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::vector<ExperimentConfig>& configs, const fs::path& work) {
  std::string detail;
  bool pass = true;
  for (ExperimentConfig c : configs) {
    c.grid_N.resize(2);
    c.grid_K.resize(2);
    c.replications = 40;
    std::string files[2][2];
    for (int run = 0; run < 2; ++run) {
      c.threads = run == 0 ? 1 : 0;
      const fs::path dir = work / ("determinism_" + std::string(to_string(c.model)) + "_" + std::to_string(run));
      write_results(run_experiment(c), c, dir, RunTimes{});
      files[run][0] = slurp(dir / kNonsequentialFile);
      files[run][1] = slurp(dir / kSequentialFile);
    }
    const bool same = files[0][0] == files[1][0] && files[0][1] == files[1][1] && !files[0][1].empty();
    pass = pass && same;
    detail += std::string(to_string(c.model)) + (same ? " identical" : " DIFFERENT") + "; ";
  }
  return {pass, detail + "two runs per model (1 thread vs all threads, 40 replications, 2+2 cells)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string configs_dir;
  std::string work_dir = "acceptance_runs";
  std::vector<int> known_failures;
  app.add_option("--configs", configs_dir, "Directory holding vmf.conf and hyperboloid.conf")->required();
  app.add_option("--workdir", work_dir, "Scratch directory for simulation output");
  app.add_option("--known-failure", known_failures,
                 "Criterion whose FAIL is documented and does not set the exit code (repeatable)");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  std::map<int, Outcome> results;
  auto guarded = [&results](int id, const std::function<Outcome()>& f) {
    try {
      results[id] = f();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
  };

  guarded(1, flatness);
  guarded(2, duality);
  guarded(3, closed_forms);
  guarded(4, gauss_equation);
  guarded(5, dual_quadric);
  guarded(6, conformal_flatness);
  guarded(7, gaussian_expfam_gauge);
  guarded(8, sampler);
  const double geometry_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path work(work_dir);
  std::vector<ExperimentConfig> configs;
  std::vector<SimulationRun> runs;
  const auto t1 = std::chrono::steady_clock::now();
  try {
    for (const char* name : {"vmf.conf", "hyperboloid.conf"}) {
      ExperimentConfig c = load_config(fs::path(configs_dir) / name);
      const auto start = std::chrono::system_clock::now();
      const auto s0 = std::chrono::steady_clock::now();
      const ResultTable t = run_experiment(c);
      const fs::path dir = work / to_string(c.model);
      write_results(t, c, dir, RunTimes{start, std::chrono::system_clock::now()});
      SimulationRun run;
      run.name = std::string(to_string(c.model));
      run.gates = evaluate_gates(read_results(dir));
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
      runs.push_back(run);
      configs.push_back(c);
    }
    results[9] = collect(runs, [](const Gate& g) { return starts_with(g.name, "CCOV"); });
    results[10] = collect(runs, [](const Gate& g) { return starts_with(g.name, "OCOV") || starts_with(g.name, "OALB"); });
    results[11] = collect(runs, [](const Gate& g) { return starts_with(g.name, "MST") || starts_with(g.name, "SDST"); });
    results[13] = collect(runs, [](const Gate& g) { return g.exclusion; });
  } catch (const std::exception& e) {
    for (int id : {9, 10, 11, 13}) results[id] = {false, std::string("exception: ") + e.what()};
  }
  const double simulation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  guarded(12, [&] { return determinism(configs, work); });

  const char* names[] = {"",
                         "ambient families dually flat",
                         "duality identities, plain and conformal",
                         "closed-form metric, H, R_abba, lambda, r_dagger",
                         "Gauss equation vs direct curvature",
                         "dual-quadric identity and classification flags",
                         "conformal flatness and quadric gauge",
                         "Gaussian expfam gauge: Legendre and flatness",
                         "sampler mean within 3 SE of r_dagger xi",
                         "CCOV within 3 batched SE of CCRB at two largest K",
                         "OCOV within 3 SE of OALB, OALB - OCRB > 0 at two largest N",
                         "MST within 3 SE of K nu(u0) + c, SDST/sqrt(K) within 30%",
                         "identical config and seed give identical CSVs",
                         "exclusions <= 1% per cell"};
  bool all = true;
  std::size_t failed = 0, waived = 0;
  for (const auto& [id, o] : results) {
    const bool known = std::find(known_failures.begin(), known_failures.end(), id) != known_failures.end();
    if (!o.pass) {
      ++failed;
      if (known) ++waived;
      else all = false;
    }
    std::printf("criterion %2d: %s  %s | %s%s\n", id, o.pass ? "PASS" : "FAIL", names[id], o.detail.c_str(),
                !o.pass && known ? " [known failure, see README]" : "");
  }
  for (const SimulationRun& r : runs) std::printf("simulation %s: %.1f s\n", r.name.c_str(), r.seconds);
  std::printf("geometry criteria: %.1f s, simulation criteria: %.1f s\n", geometry_seconds, simulation_seconds);
  std::printf("%zu of %zu criteria PASS, %zu FAIL (%zu known)\n", results.size() - failed, results.size(), failed, waived);
  std::printf("%s\n", all ? (failed ? "OK WITH KNOWN FAILURES" : "ALL PASS") : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
