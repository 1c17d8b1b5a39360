// confgeom: geometry verification, simulation and report commands.
//
// Exit codes: 0 pass, 1 usage or I/O error, 2 tolerance or gate failure,
// 3 too many excluded replications.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "confgeom.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTolerance = 2;
constexpr int kExitExclusion = 3;

struct GeometryFlags {
  std::string model;
  std::size_t m = 2;
  double r = 0.0;
  std::size_t density = 3;
  bool json = false;
  confgeom::GeometryTolerances tol;
};

struct SimulateFlags {
  std::string config;
  std::string outdir;
  std::size_t threads = 0;
};

struct ReportFlags {
  std::string results;
  confgeom::GateOptions gates;
};

int cmd_geometry(const GeometryFlags& f) {
  const confgeom::ModelKind kind = confgeom::parse_model_kind(f.model);
  const confgeom::GeometryReport g = confgeom::geometry_report(kind, f.m, f.r, f.density, f.tol);
  if (f.json) {
    std::cout << confgeom::to_json(g).dump(2) << "\n";
  } else {
    std::cout << confgeom::geometry_text(g);
  }
  return g.pass ? kExitOk : kExitTolerance;
}

int cmd_simulate(const SimulateFlags& f) {
  confgeom::ExperimentConfig cfg = confgeom::load_config(f.config);
  if (!f.outdir.empty()) cfg.outdir = f.outdir;
  cfg.threads = f.threads;
  confgeom::RunTimes times;
  times.start = std::chrono::system_clock::now();
  const confgeom::ResultTable table = confgeom::run_experiment(cfg);
  times.end = std::chrono::system_clock::now();
  confgeom::write_results(table, cfg, cfg.outdir, times);
  std::cout << "wrote " << (std::filesystem::path(cfg.outdir) / confgeom::kNonsequentialFile).string() << ", "
            << (std::filesystem::path(cfg.outdir) / confgeom::kSequentialFile).string() << " and "
            << (std::filesystem::path(cfg.outdir) / confgeom::kManifestFile).string() << "\n";
  confgeom::check_exclusions(table);
  return kExitOk;
}

int cmd_report(const ReportFlags& f) {
  const confgeom::ResultSet rs = confgeom::read_results(f.results);
  const auto gates = confgeom::evaluate_gates(rs, f.gates);
  bool failed = false;
  bool excluded = false;
  bool inconclusive = false;
  for (const auto& g : gates) {
    std::cout << confgeom::to_string(g.status) << "  " << g.name << "  [" << g.detail << "]\n";
    if (g.status == confgeom::GateStatus::Fail) {
      failed = true;
      excluded = excluded || g.exclusion;
    }
    if (g.status == confgeom::GateStatus::Inconclusive) inconclusive = true;
  }
  if (excluded) {
    std::cout << "EXCLUSION LIMIT EXCEEDED\n";
    return kExitExclusion;
  }
  if (failed) {
    std::cout << "SOME GATES FAIL\n";
    return kExitTolerance;
  }
  if (inconclusive) {
    std::cerr << "warning: some gates are inconclusive (SE too wide)\n";
    std::cout << "NO GATE FAILS; SOME INCONCLUSIVE\n";
    return kExitOk;
  }
  std::cout << "ALL GATES PASS\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal geometry of curved exponential families: checks and simulations"};
  app.require_subcommand(1);

  GeometryFlags gf;
  auto* geo = app.add_subcommand("geometry", "Verify the structural geometry of a model");
  geo->add_option("--model", gf.model, "vmf or hyperboloid")->required()->check(CLI::IsMember({"vmf", "hyperboloid"}));
  geo->add_option("--m", gf.m, "Manifold dimension")->check(CLI::Range(2, 6));
  geo->add_option("--r", gf.r, "Concentration r > 0")->required()->check(CLI::PositiveNumber);
  geo->add_option("--grid-density", gf.density, "Probe points per chart axis")->check(CLI::Range(1, 12));
  geo->add_flag("--json", gf.json, "Emit the report as JSON");
  geo->add_option("--tol-classify", gf.tol.classify, "Classification residual tolerance")->capture_default_str();
  geo->add_option("--tol-closed-form", gf.tol.closed_form, "Relative closed-form tolerance")->capture_default_str();
  geo->add_option("--tol-weyl", gf.tol.weyl, "Weyl-Schouten tolerance")->capture_default_str();
  geo->add_option("--tol-gauge-pde", gf.tol.gauge_pde, "Gauge equation tolerance")->capture_default_str();
  geo->add_option("--tol-gamma-bar", gf.tol.gamma_bar, "Gamma-bar tolerance in ubar")->capture_default_str();
  geo->add_option("--tol-h-bar", gf.tol.h_bar, "H-bar tolerance")->capture_default_str();

  SimulateFlags sf;
  auto* sim = app.add_subcommand("simulate", "Run the nonsequential and sequential experiments");
  sim->add_option("--config", sf.config, "Experiment config file")->required();
  sim->add_option("--outdir", sf.outdir, "Override the config output directory");
  sim->add_option("--threads", sf.threads, "Worker threads (0 = all cores)")->capture_default_str();

  ReportFlags rf;
  auto* rep = app.add_subcommand("report", "Evaluate statistical gates on simulation output");
  rep->add_option("--results", rf.results, "Results directory")->required();
  rep->add_option("--se-multiple", rf.gates.se_multiple, "Gate width in standard errors")->capture_default_str();
  rep->add_option("--sdst-tolerance", rf.gates.sdst_ratio_tolerance, "Allowed relative change of SDST/sqrt(K)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*geo) return cmd_geometry(gf);
    if (*sim) return cmd_simulate(sf);
    if (*rep) return cmd_report(rf);
  } catch (const confgeom::ExclusionLimitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitExclusion;
  } catch (const confgeom::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const confgeom::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const confgeom::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const confgeom::ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const confgeom::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTolerance;
  }
  return kExitUsage;
}
