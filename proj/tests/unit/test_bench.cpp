#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bilevel/bench.hpp"

using namespace bilevel;
using namespace bilevel::bench;

namespace {

std::string tmp(const std::string& name) { return ::testing::TempDir() + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const char* kSmall = R"(
[run]
trials = 3
record_every = 500
seed = 9
timing = false

[problem]
name = example1
dim = 4

[solver]
name = penalty
K = 2000

[solver]
name = rmd
label = rmd-T2
T = 2
K = 2000
)";

}  // namespace

TEST(Config, ParsesSections) {
  const RunConfig c = parse(kSmall);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.record_every, 500);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(c.timing);
  EXPECT_EQ(c.problem.name, "example1");
  EXPECT_EQ(c.problem.dim, 4);
  ASSERT_EQ(c.solvers.size(), 2u);
  EXPECT_EQ(c.solvers[0].label, "penalty");
  EXPECT_EQ(c.solvers[1].label, "rmd-T2");
  EXPECT_EQ(c.solvers[1].cfg.T, 2);
  // Untouched fields keep the documented defaults.
  EXPECT_EQ(c.solvers[0].cfg.sigma0, 1e-3);
  EXPECT_EQ(c.solvers[0].cfg.rho0, 1e-4);
  EXPECT_EQ(c.solvers[0].cfg.c_gamma, 1.1);
  EXPECT_EQ(c.solvers[0].cfg.lambda0, 10.0);
  c.validate();
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse("[run]\ntrials = 2\n\n[solver]\nnmae = penalty\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 5);
    EXPECT_NE(std::string(e.what()).find("nmae"), std::string::npos);
  }
  EXPECT_THROW(parse("[run]\ntrials = two\n"), ConfigError);
  EXPECT_THROW(parse("trials = 2\n"), ConfigError);
  EXPECT_THROW(parse("[bogus]\n"), ConfigError);
  EXPECT_THROW(parse("[solver]\nbox = 1,2,3\n"), ConfigError);
  EXPECT_THROW(parse("[solver]\nstepper = rmsprop\n"), ConfigError);
}

TEST(Config, ValidationCatchesBadReferences) {
  RunConfig c = parse(kSmall);
  c.problem.name = "example9";
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse(kSmall);
  c.record_every = 5000;  // > K
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse(kSmall);
  c.solvers[0].name = "newton";
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse(kSmall);
  c.problem.name = "constrained";
  EXPECT_THROW(c.validate(), ConfigError);  // rmd cannot handle constraints
}

TEST(Csv, FormatRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.123456789}) {
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(round_ms(0.12345), 0.123);
  EXPECT_EQ(with_suffix("a/b.csv", "_summary"), "a/b_summary.csv");
  EXPECT_EQ(with_suffix("a.d/out", "_T5"), "a.d/out_T5");
}

TEST(Run, RowCountsAndExitCode) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("run.csv");
  std::ostringstream log, err;
  ASSERT_EQ(cmd_run(c, log, err), kOk) << err.str();
  const auto rows = read_csv(c.output_path);
  ASSERT_EQ(rows.size(), 1u + 2 * 3 * (2000 / 500));
  EXPECT_EQ(rows[0].size(), 16u);
  EXPECT_EQ(rows[0][0], "solver");
  EXPECT_EQ(rows[0][15], "peak_stored_vecs");

  c.trials = 1;
  c.record_every = 0;
  c.solvers.resize(1);
  ASSERT_EQ(cmd_run(c, log, err), kOk);
  EXPECT_EQ(read_csv(c.output_path).size(), 2u);
}

TEST(Run, ByteIdenticalAcrossInvocationsAndThreads) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("det.csv");
  std::ostringstream log, err;
  setenv("BILEVEL_THREADS", "1", 1);
  ASSERT_EQ(cmd_run(c, log, err), kOk);
  const std::string a = slurp(c.output_path);
  setenv("BILEVEL_THREADS", "3", 1);
  ASSERT_EQ(cmd_run(c, log, err), kOk);
  const std::string b = slurp(c.output_path);
  unsetenv("BILEVEL_THREADS");
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a.empty());
}

TEST(Run, MalformedConfigWritesNothing) {
  const std::string cfg_path = tmp("bad.cfg");
  const std::string out = tmp("never.csv");
  std::remove(out.c_str());
  {
    std::ofstream f(cfg_path);
    f << "[run]\noutput = " << out << "\n[problem]\nname = example1\n[solver]\nname = penalty\nKK = 3\n";
  }
  EXPECT_THROW(load_config(cfg_path), ConfigError);
  RunConfig c = parse(kSmall);
  c.output_path = out;
  c.solvers[0].cfg.T = 0;
  std::ostringstream log, err;
  EXPECT_EQ(cmd_run(c, log, err), kConfigError);
  EXPECT_FALSE(exists(out));
}

TEST(Run, NumericAbortExitCode) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("abort.csv");
  std::remove(c.output_path.c_str());
  c.solvers.resize(1);
  c.solvers[0].name = "gd";
  c.solvers[0].cfg.stepper = StepperKind::kPlainGd;
  c.solvers[0].cfg.rho0 = 5.0;  // unstable plain GD on g
  c.solvers[0].use_problem_box = false;
  std::ostringstream log, err;
  EXPECT_EQ(cmd_run(c, log, err), kNumericAbort);
  EXPECT_NE(err.str().find("trial"), std::string::npos);
  EXPECT_FALSE(exists(c.output_path));
}

TEST(Compare, SummaryMatchesTrace) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("cmp.csv");
  std::ostringstream log, err;
  ASSERT_EQ(cmd_compare(c, log, err), kOk) << err.str();
  const auto trace = read_csv(c.output_path);
  const auto summary = read_csv(with_suffix(c.output_path, "_summary"));
  ASSERT_EQ(summary.size(), 3u);

  // Final distance per (solver, trial) from the trace.
  std::map<std::string, std::vector<double>> finals;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i][2] == "2000") finals[trace[i][0]].push_back(std::stod(trace[i][12]));
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto& xs = finals[summary[i][0]];
    ASSERT_EQ(xs.size(), 3u);
    double mean = 0;
    for (double x : xs) mean += x / 3;
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(std::stod(summary[i][4]), mean, 1e-12);
    EXPECT_NEAR(std::stod(summary[i][5]), std::sqrt(ss / 2), 1e-12);
  }
}

TEST(Compare, IdenticalSolversGiveIdenticalRows) {
  RunConfig c = parse(kSmall);
  c.solvers[1] = c.solvers[0];
  c.solvers[1].label = "again";
  c.output_path = tmp("twins.csv");
  std::ostringstream log, err;
  ASSERT_EQ(cmd_compare(c, log, err), kOk);
  const auto s = read_csv(with_suffix(c.output_path, "_summary"));
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t j = 1; j < s[1].size(); ++j) EXPECT_EQ(s[1][j], s[2][j]) << "column " << j;
}

TEST(Compare, NeedsTwoSolvers) {
  RunConfig c = parse(kSmall);
  c.solvers.resize(1);
  std::ostringstream log, err;
  EXPECT_EQ(cmd_compare(c, log, err), kConfigError);
}

TEST(Sweep, WritesPerValueFilesAndSummary) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("sw.csv");
  std::ostringstream log, err;
  ASSERT_EQ(cmd_sweep(c, "T", {1, 3}, log, err), kOk) << err.str();
  EXPECT_TRUE(exists(tmp("sw_T1.csv")));
  EXPECT_TRUE(exists(tmp("sw_T3.csv")));
  const auto s = read_csv(tmp("sw_summary.csv"));
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[1][1], "T");
  EXPECT_EQ(s[1][2], "1");
  EXPECT_EQ(s[3][2], "3");
}

TEST(Sweep, RejectsBadAxes) {
  RunConfig c = parse(kSmall);
  c.output_path = tmp("swbad.csv");
  std::ostringstream log, err;
  EXPECT_EQ(cmd_sweep(c, "T", {}, log, err), kConfigError);
  EXPECT_EQ(cmd_sweep(c, "sigma0", {1e-3}, log, err), kConfigError);
  EXPECT_EQ(cmd_sweep(c, "gamma0", {1, 2}, log, err), kConfigError);  // rmd has no gamma
  EXPECT_EQ(cmd_sweep(c, "T", {0.5}, log, err), kConfigError);
  EXPECT_FALSE(exists(tmp("swbad_summary.csv")));
}

TEST(Check, Levels) {
  ProblemParams pp;
  std::ostringstream log, err;
  pp.name = "example1";
  EXPECT_EQ(cmd_check(pp, "lemma3", 0, log, err), kOk) << err.str();
  EXPECT_EQ(cmd_check(pp, "oracle", 0, log, err), kOk) << err.str();
  EXPECT_EQ(cmd_check(pp, "kkt", 0, log, err), kOk) << err.str();
  pp.name = "example3";
  EXPECT_EQ(cmd_check(pp, "hypergrad", 0, log, err), kOk) << err.str();
  EXPECT_NE(log.str().find("expected failure"), std::string::npos);
  pp.name = "ridge";
  EXPECT_EQ(cmd_check(pp, "hypergrad", 0, log, err), kOk) << err.str();
  EXPECT_EQ(cmd_check(pp, "sideways", 0, log, err), kConfigError);
  pp.name = "nope";
  EXPECT_EQ(cmd_check(pp, "oracle", 0, log, err), kConfigError);
}
