#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "confgeom/harness.hpp"

using namespace confgeom;

namespace {

const char* kTiny = R"(# tiny vMF run
model = vmf
r = 0.25
u0 = 0.5235987755982988, 1.0471975511965976
grid_N = 20, 40
grid_K = 30
replications = 20
seed = 7
)";

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return 999;
}

std::string with_line(const std::string& base, const std::string& extra) { return base + extra + "\n"; }

}  // namespace

TEST(Config, ParsesAndFillsDefaults) {
  const ExperimentConfig c = parse_config(kTiny);
  EXPECT_EQ(c.model, ModelKind::Vmf);
  EXPECT_EQ(c.m, 2u);
  EXPECT_DOUBLE_EQ(c.r, 0.25);
  EXPECT_EQ(c.grid_N, (std::vector<double>{20, 40}));
  EXPECT_EQ(c.grid_K, (std::vector<double>{30}));
  EXPECT_EQ(c.replications, 20u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.outdir, "results");
  Matrix d = Matrix::Zero(2, 3);
  d(0, 0) = d(1, 1) = 1.0;
  EXPECT_EQ(c.D, d);
}

TEST(Config, RowMajorD) {
  const ExperimentConfig c = parse_config(with_line(kTiny, "D = 0.01, 0, 0, 0, 0.02, 0.5"));
  EXPECT_DOUBLE_EQ(c.D(1, 1), 0.02);
  EXPECT_DOUBLE_EQ(c.D(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(c.D(0, 0), 0.01);
}

TEST(Config, RoundTripsThroughItsTextForm) {
  ExperimentConfig c = parse_config(with_line(kTiny, "outdir = out/x"));
  const ExperimentConfig back = parse_config(config_text(c));
  EXPECT_EQ(back.u0, c.u0);
  EXPECT_EQ(back.D, c.D);
  EXPECT_EQ(back.grid_N, c.grid_N);
  EXPECT_EQ(back.grid_K, c.grid_K);
  EXPECT_EQ(back.r, c.r);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.outdir, "out/x");
  EXPECT_EQ(config_text(back), config_text(c));
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line(with_line(kTiny, "colour = red")), 9u);
  EXPECT_EQ(error_line(with_line(kTiny, "seed = 8")), 9u);
  EXPECT_EQ(error_line(with_line(kTiny, "no equals sign")), 9u);
  EXPECT_EQ(error_line(with_line(kTiny, "m = 3")), 9u);
  EXPECT_EQ(error_line(with_line(kTiny, "D = 1, 0, 0, 2, 0, 0")), 9u);
  EXPECT_EQ(error_line(with_line(kTiny, "D = 1, 0, 0")), 9u);
  EXPECT_EQ(error_line("model = sphere\nr = 1\n"), 1u);
  EXPECT_EQ(error_line("model = vmf\n\nr = -1\n"), 3u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.0, 1.0\n"), 3u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, 1.0, 2.0\n"), 3u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, abc\n"), 3u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, 1\ngrid_N = 10.5\n"), 4u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, 1\ngrid_N = 10\ngrid_K = 0\n"), 5u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, 1\ngrid_N = 10\ngrid_K = 5\nreplications = 1\n"), 6u);
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\nu0 = 0.5, 1\ngrid_N = 10\ngrid_K = 5\nreplications = -3\n"), 6u);
  EXPECT_EQ(error_line("model =\n"), 1u);
  // A missing key is not tied to a line.
  EXPECT_EQ(error_line("model = vmf\nr = 0.25\n"), 0u);
  try {
    parse_config(with_line(kTiny, "colour = red"));
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 9: unknown key 'colour'"), std::string::npos) << e.what();
  }
}

TEST(Config, LoadReportsMissingFile) {
  EXPECT_THROW(load_config("/nonexistent/dir/x.conf"), IoError);
}

TEST(Harness, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 2.3094010767585031, 1e-300, -7.25}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Harness, SeedsAreDistinctAndStable) {
  // reference value of the splitmix64 generator started from 0
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  std::set<std::uint64_t> seen;
  for (Experiment e : {Experiment::Nonsequential, Experiment::Sequential})
    for (std::size_t cell = 0; cell < 10; ++cell)
      for (std::size_t rep = 0; rep < 50; ++rep) seen.insert(replication_seed(42, e, cell, rep));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(replication_seed(42, Experiment::Sequential, 3, 4), replication_seed(42, Experiment::Sequential, 3, 4));
  EXPECT_NE(replication_seed(42, Experiment::Sequential, 3, 4), replication_seed(43, Experiment::Sequential, 3, 4));
}

TEST(Harness, BatchedStandardError) {
  // batch statistics 0, 1, ..., 9: sd = sqrt(55/6), SE = sd / sqrt(10)
  const double se = detail::batched_se(100, [](std::size_t lo, std::size_t) { return static_cast<double>(lo / 10); });
  EXPECT_NEAR(se, std::sqrt(55.0 / 6.0 / 10.0), 1e-15);
  EXPECT_DOUBLE_EQ(detail::batched_se(50, [](std::size_t, std::size_t) { return 3.0; }), 0.0);
  EXPECT_TRUE(std::isnan(detail::batched_se(1, [](std::size_t, std::size_t) { return 1.0; })));
  // fewer replications than batches: one batch per replication
  std::size_t calls = 0;
  detail::batched_se(4, [&calls](std::size_t lo, std::size_t hi) {
    EXPECT_EQ(hi - lo, 1u);
    ++calls;
    return 0.0;
  });
  EXPECT_EQ(calls, 4u);
}

TEST(Harness, WrapAngle) {
  const double pi = std::numbers::pi;
  EXPECT_NEAR(detail::wrap_angle(2.0 * pi - 0.1), -0.1, 1e-15);
  EXPECT_NEAR(detail::wrap_angle(-2.0 * pi + 0.1), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(detail::wrap_angle(pi), pi);
  EXPECT_DOUBLE_EQ(detail::wrap_angle(0.3), 0.3);
}

TEST(Harness, ParallelForCoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(97);
  detail::parallel_for(97, 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(detail::parallel_for(10, 3,
                                    [](std::size_t i) {
                                      if (i == 5) throw ChartError("boom");
                                    }),
               ChartError);
}

TEST(Harness, EmptyTablesWriteHeadersOnly) {
  EXPECT_EQ(nonsequential_csv({}),
            "cell_N,OCOV11,OCOV12,OCOV22,OCOV11_se,OCOV12_se,OCOV22_se,OCRB11,OCRB12,OCRB22,OALB11,OALB12,OALB22,"
            "excluded\n");
  EXPECT_EQ(sequential_csv({}),
            "cell_K,MST,MST_se,SDST,CCOV11,CCOV12,CCOV22,CCOV11_se,CCOV12_se,CCOV22_se,CCRB11,CCRB12,CCRB22,"
            "excluded\n");
}

TEST(Harness, ExclusionLimit) {
  ResultTable t;
  t.replications = 500;
  t.sequential.push_back(SequentialRow{});
  t.sequential.back().excluded = 5;
  EXPECT_NO_THROW(check_exclusions(t));
  t.sequential.back().excluded = 6;
  EXPECT_THROW(check_exclusions(t), ExclusionLimitError);
}

TEST(Harness, SmallRunIsDeterministicAcrossThreadCounts) {
  ExperimentConfig c = parse_config(kTiny);
  c.threads = 1;
  const ResultTable a = run_experiment(c);
  c.threads = 3;
  const ResultTable b = run_experiment(c);
  EXPECT_EQ(nonsequential_csv(a.nonsequential), nonsequential_csv(b.nonsequential));
  EXPECT_EQ(sequential_csv(a.sequential), sequential_csv(b.sequential));
  ASSERT_EQ(a.nonsequential.size(), 2u);
  ASSERT_EQ(a.sequential.size(), 1u);
  EXPECT_EQ(a.cell_seconds.size(), 3u);

  const SequentialRow& s = a.sequential.front();
  EXPECT_EQ(s.excluded, 0u);
  EXPECT_GE(s.mst, 3.0);
  EXPECT_GT(s.sdst, 0.0);
  EXPECT_TRUE(std::isfinite(s.ccov_se.v11));
  const NonsequentialRow& n = a.nonsequential.back();
  EXPECT_DOUBLE_EQ(n.N, 40.0);
  EXPECT_GT(n.ocov.v11, 0.0);
  EXPECT_GT(n.oalb.v11, n.ocrb.v11);
  EXPECT_GT(n.oalb.v22, n.ocrb.v22);
}

TEST(Harness, WriteResultsCreatesFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "confgeom_test_write";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = parse_config(kTiny);
  ResultTable t;
  t.replications = c.replications;
  t.cell_seconds = {{"N=20", 0.5}};
  write_results(t, c, dir, RunTimes{});
  EXPECT_TRUE(std::filesystem::exists(dir / kNonsequentialFile));
  EXPECT_TRUE(std::filesystem::exists(dir / kSequentialFile));
  // the manifest parses as a config
  const ExperimentConfig back = load_config(dir / kManifestFile);
  EXPECT_EQ(config_text(back), config_text(c));
  std::filesystem::remove_all(dir);
}
