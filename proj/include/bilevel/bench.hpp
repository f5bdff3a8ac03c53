#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "bilevel/problems.hpp"
#include "bilevel/solvers.hpp"

namespace bilevel::bench {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kNumericAbort = 3 };

/// Bad config text or values. `line` is 0 for errors not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// penalty | penalty_aug | gd | rmd | fmd | approxgrad
struct SolverSpec {
  std::string name = "penalty";
  std::string label;  // defaults to name
  PenaltyConfig cfg;
  bool use_problem_box = true;  // take the box from the problem instance unless set explicitly
};

struct RunConfig {
  ProblemParams problem;
  std::vector<SolverSpec> solvers;
  int trials = 1;
  std::int64_t record_every = 0;  // 0: only the final iterate
  std::string output_path = "run.csv";
  std::uint64_t seed = 0;
  bool timing = true;  // false writes 0 in every wall-time column (byte-stable output)

  // Optional [sweep] section; CLI flags override.
  std::string sweep_axis;
  std::vector<double> sweep_values;

  void validate() const;
};

/// Flat `key = value` text with [run], [problem], [sweep] and repeatable [solver]
/// sections. '#' starts a comment. Throws ConfigError naming `source` and the line.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

const std::vector<std::string>& solver_names();
bool is_penalty_solver(const std::string& name);

struct TrialOutcome {
  int trial = 0;
  SolveResult result;
  double final_metric = 0;  // instance metric at the final point, f when the problem has none
};

struct SolverRun {
  SolverSpec spec;
  std::vector<TrialOutcome> trials;
};

/// Trial t uses seed + t for the instance and a derived stream for the start point.
RngSeed trial_seed(const RunConfig& cfg, int trial);
Point trial_init(const ProblemInstance& inst, RngSeed trial);

SolveResult solve(const ProblemInstance& inst, const SolverSpec& spec, const Point& init,
                  RngSeed seed);

/// Runs every trial of one solver, in parallel up to worker_count(). A SolverAbort
/// is rethrown with the trial index prepended.
SolverRun run_solver(const RunConfig& cfg, const SolverSpec& spec);

/// BILEVEL_THREADS if set (>= 1), else hardware concurrency.
int worker_count();

/// Per-record rows: solver,trial,k,wall_seconds,gamma,eps,lambda,f,g,grad_u_norm,
/// grad_v_norm,feas_norm,distance,n_hvp,n_jvp,peak_stored_vecs
void write_trace_csv(std::ostream& out, const std::vector<SolverRun>& runs, bool timing);

struct SummaryRow {
  std::string label;
  std::string axis;  // sweep only
  double value = 0;  // sweep only
  int trials = 0;
  double metric_mean = 0;
  double metric_sd = 0;
  double metric_median = 0;
  double wall_mean = 0;
  double wall_per_update = 0;  // wall_mean / K
  std::int64_t n_hvp = 0;      // totals over all trials
  std::int64_t n_jvp = 0;
  std::int64_t peak_stored_vecs = 0;
};

SummaryRow summarize(const SolverRun& run, bool timing);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// 17 significant digits, `nan`/`inf` spelled out.
std::string format_double(double x);
/// Seconds rounded to the millisecond.
double round_ms(double seconds);

/// Sibling path: stem + suffix + extension ("out.csv", "_summary" -> "out_summary.csv").
std::string with_suffix(const std::string& path, const std::string& suffix);

struct CommandOptions {
  bool quiet = false;
};

// Commands return an ExitCode and print diagnostics to `err`.
int cmd_run(const RunConfig& cfg, std::ostream& log, std::ostream& err, const CommandOptions& = {});
int cmd_sweep(RunConfig cfg, const std::string& axis, const std::vector<double>& values,
              std::ostream& log, std::ostream& err, const CommandOptions& = {});
int cmd_compare(const RunConfig& cfg, std::ostream& log, std::ostream& err,
                const CommandOptions& = {});
/// level: oracle | hypergrad | lemma3 | kkt
int cmd_check(const ProblemParams& problem, const std::string& level, std::uint64_t seed,
              std::ostream& log, std::ostream& err);

}  // namespace bilevel::bench
