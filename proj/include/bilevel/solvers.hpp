#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/oracle.hpp"

namespace bilevel {

enum class LinearSolver { kAdam, kPlainGd, kConjugateGradient };
enum class Estimator { kRmd, kFmd, kApproxGrad };

std::string to_string(LinearSolver s);
LinearSolver linear_solver_from_string(const std::string& name);
std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& name);

/// Hyperparameters shared by every solver. `K` is the budget of u-updates;
/// the penalty schedule advances once per tolerance phase.
struct PenaltyConfig {
  std::int64_t K = 40000;
  int T = 10;
  double sigma0 = 1e-3;  // u step
  double rho0 = 1e-4;    // v step (and linear-system step for ApproxGrad)
  double gamma0 = 1.0;
  double eps0 = 1.0;
  double lambda0 = 10.0;
  double nu0 = 0.0;
  double c_gamma = 1.1;
  double c_eps = 0.9;
  double c_lambda = 0.9;
  double c_step = 0.9;  // sigma, rho *= c_step at each phase end
  int while_cap = 5000;
  bool multiplier_updates = true;  // nu <- nu + gamma grad_v g at phase end
  StepperKind stepper = StepperKind::kAdam;
  std::optional<BoxBounds> box;
  RngSeed seed{0};

  // ApproxGrad
  double reg_lambda = 0.0;
  LinearSolver linear_solver = LinearSolver::kAdam;
  int T_lin = 0;  // 0: use T

  std::int64_t record_every = 1;

  void validate() const;
};

struct TraceRecord {
  std::int64_t k = 0;  // u-updates performed so far
  double gamma = 0;
  double eps = 0;
  double lambda = 0;
  double f = 0;
  double g = 0;
  double grad_u_norm = 0;
  double grad_v_norm = 0;
  double grad_v_g_norm = 0;
  double feas_norm = 0;
  double distance = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0;
  OracleCounters counters;
};

struct SolverTrace {
  std::vector<TraceRecord> records;
  std::int64_t phases = 0;    // completed tolerance phases (penalty schedule steps)
  std::int64_t cap_hits = 0;  // phases that ended on while_cap instead of tolerance
};

struct SolveResult {
  Point point;
  SolverTrace trace;
  OracleCounters counters;
  PenaltyParams final_params;  // gamma, lambda, nu at exit (penalty solvers only)
  double wall_seconds = 0;
};

/// Optional hooks for a run: distance metric for the trace.
struct RunHooks {
  std::function<double(const Point&)> metric;
};

/// Thrown when a run hits a non-finite quantity; carries the partial trace.
class SolverAbort : public NumericError {
 public:
  SolverAbort(const std::string& what, std::int64_t k, SolverTrace trace)
      : NumericError(what), k_(k), trace_(std::move(trace)) {}
  std::int64_t iteration() const { return k_; }
  const SolverTrace& trace() const { return trace_; }

 private:
  std::int64_t k_;
  SolverTrace trace_;
};

/// Alternating penalty minimisation: per u-update, T v-steps on grad_v f~ then
/// one u-step on grad_u f~, repeated until |grad f~|^2 <= eps_k^2 or while_cap;
/// then gamma *= c_gamma, eps *= c_eps.
SolveResult penalty_solve(const ProblemOracle& oracle, const Point& init, const PenaltyConfig& cfg,
                          const RunHooks& hooks = {});

/// penalty_solve plus the lambda g regulariser on the v-update and the
/// nu^T grad_v g augmented-Lagrangian term with multiplier updates.
SolveResult penalty_aug_solve(const ProblemOracle& oracle, const Point& init,
                              const PenaltyConfig& cfg, const RunHooks& hooks = {});

/// T v-steps on grad_v g, then one u-step on grad_u f, K times.
SolveResult gd_alternating(const ProblemOracle& oracle, const Point& init,
                           const PenaltyConfig& cfg, const RunHooks& hooks = {});

struct HypergradResult {
  RealVec hypergrad;
  RealVec v_final;
};

/// Reverse-mode differentiation through T plain-GD steps on g.
HypergradResult rmd_hypergrad(const ProblemOracle& oracle, const RealVec& u, const RealVec& v0,
                              int T, double rho, OracleCounters* counters = nullptr);

/// Forward-mode differentiation; needs the dense Hessian/Jacobian blocks.
HypergradResult fmd_hypergrad(const ProblemOracle& oracle, const RealVec& u, const RealVec& v0,
                              int T, double rho, OracleCounters* counters = nullptr);

/// Persistent ApproxGrad state: stepper memory and the warm-started q.
struct ApproxGradState {
  StepperState<double> v_stepper;
  StepperState<double> q_stepper;
  RealVec q;
  double residual = 0;  // |(H + reg I) q - grad_v f| after the last solve
};

struct ApproxGradOptions {
  int T_v = 1;
  int T_lin = 1;
  double rho = 1e-4;      // v step
  double q_rate = 1e-4;   // linear-system step (Adam / GD)
  double reg_lambda = 0;
  StepperKind v_stepper = StepperKind::kAdam;
  LinearSolver linear_solver = LinearSolver::kAdam;
  std::optional<BoxBounds> box;
};

/// T_v steps on grad_v g, then T_lin steps on |(H + reg I) q - grad_v f|^2;
/// returns grad_u f - J q.
HypergradResult approxgrad_hypergrad(const ProblemOracle& oracle, const RealVec& u,
                                     const RealVec& v0, const ApproxGradOptions& opts,
                                     ApproxGradState& state, OracleCounters* counters = nullptr);

/// Convenience overload with fresh state.
HypergradResult approxgrad_hypergrad(const ProblemOracle& oracle, const RealVec& u,
                                     const RealVec& v0, int T_v, int T_lin, double rho,
                                     double reg_lambda, OracleCounters* counters = nullptr);

/// K u-updates driven by a hypergradient estimator, warm-starting v (and q).
SolveResult outer_loop(const ProblemOracle& oracle, Estimator estimator, const Point& init,
                       const PenaltyConfig& cfg, const RunHooks& hooks = {});

/// Dimension guard for FMD's dense U x V state.
inline constexpr std::int64_t kFmdMaxState = 1'000'000;

}  // namespace bilevel
