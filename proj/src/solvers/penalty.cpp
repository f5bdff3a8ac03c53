#include <cmath>

#include "recorder.hpp"

namespace bilevel {
namespace {

void apply_box(RealVec& x, const std::optional<BoxBounds>& box) {
  if (box) clamp_to_box(x, *box);
}

SolveResult run_penalty(const ProblemOracle& oracle, const Point& init, const PenaltyConfig& cfg,
                        const RunHooks& hooks, bool augmented) {
  cfg.validate();
  oracle.check_point(init);

  SolveResult res;
  CountedOracle o(oracle, &res.counters);
  detail::Recorder rec(oracle, cfg, hooks, res.counters);

  Point p = init;
  PenaltyParams params;
  params.gamma = cfg.gamma0;
  if (augmented) {
    params.lambda = cfg.lambda0;
    if (cfg.nu0 != 0 || cfg.multiplier_updates) {
      params.nu = RealVec::Constant(oracle.dim_v, cfg.nu0);
      if (oracle.has_constraints()) params.nu_h = RealVec::Constant(oracle.dim_c, cfg.nu0);
    }
  }
  double eps = cfg.eps0;
  double sigma = cfg.sigma0, rho = cfg.rho0;
  StepperState<double> u_state(cfg.stepper, oracle.dim_u);
  StepperState<double> v_state(cfg.stepper, oracle.dim_v);
  res.counters.note_storage(1);

  std::int64_t k = 0;
  try {
    while (k < cfg.K) {
      int in_phase = 0;
      bool met = false;
      do {
        RealVec grad_v;
        for (int t = 0; t < cfg.T; ++t) {
          grad_v = penalty_grad_v(o, p, params);
          step_in_place(v_state, p.v, grad_v, rho);
          apply_box(p.v, cfg.box);
        }
        const RealVec grad_u = penalty_grad_u(o, p, params, o.grad_v_g(p));
        step_in_place(u_state, p.u, grad_u, sigma);
        apply_box(p.u, cfg.box);
        ++k;
        ++in_phase;
        // Tolerance uses the gradients of this sweep: no extra oracle calls.
        // stableNorm keeps tiny gradients from squaring to zero once eps gets small.
        met = std::hypot(grad_u.stableNorm(), grad_v.stableNorm()) <= eps;
        if (rec.due(k))
          rec.record(k, p, params.gamma, eps, params.lambda, grad_u.norm(), grad_v.norm());
      } while (!met && in_phase < cfg.while_cap && k < cfg.K);

      if (!met && in_phase < cfg.while_cap) break;  // budget exhausted mid-phase
      if (!met) ++rec.trace.cap_hits;
      ++rec.trace.phases;
      if (augmented) {
        if (cfg.multiplier_updates) {
          params.nu += params.gamma * o.grad_v_g(p);
          if (oracle.has_constraints()) params.nu_h += params.gamma * o.h(p);
        }
        params.lambda *= cfg.c_lambda;
      }
      // The schedule saturates rather than overflow (only reachable at an exact fixed point).
      if (std::isfinite(params.gamma * cfg.c_gamma)) params.gamma *= cfg.c_gamma;
      eps *= cfg.c_eps;
      sigma *= cfg.c_step;
      rho *= cfg.c_step;
    }
  } catch (const NumericError& e) {
    throw SolverAbort(std::string(augmented ? "penalty_aug_solve" : "penalty_solve") +
                          ": aborted at u-update " + std::to_string(k) + ": " + e.what(),
                      k, std::move(rec.trace));
  }

  res.wall_seconds = rec.elapsed();
  res.point = std::move(p);
  res.trace = std::move(rec.trace);
  res.final_params = std::move(params);
  return res;
}

}  // namespace

SolveResult penalty_solve(const ProblemOracle& oracle, const Point& init, const PenaltyConfig& cfg,
                          const RunHooks& hooks) {
  return run_penalty(oracle, init, cfg, hooks, false);
}

SolveResult penalty_aug_solve(const ProblemOracle& oracle, const Point& init,
                              const PenaltyConfig& cfg, const RunHooks& hooks) {
  return run_penalty(oracle, init, cfg, hooks, true);
}

SolveResult gd_alternating(const ProblemOracle& oracle, const Point& init,
                           const PenaltyConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  oracle.check_point(init);

  SolveResult res;
  CountedOracle o(oracle, &res.counters);
  detail::Recorder rec(oracle, cfg, hooks, res.counters);
  Point p = init;
  StepperState<double> u_state(cfg.stepper, oracle.dim_u);
  StepperState<double> v_state(cfg.stepper, oracle.dim_v);
  res.counters.note_storage(1);

  std::int64_t k = 0;
  try {
    for (k = 1; k <= cfg.K; ++k) {
      RealVec grad_v;
      for (int t = 0; t < cfg.T; ++t) {
        grad_v = o.grad_v_g(p);
        step_in_place(v_state, p.v, grad_v, cfg.rho0);
        apply_box(p.v, cfg.box);
      }
      const RealVec grad_u = o.grad_u_f(p);
      step_in_place(u_state, p.u, grad_u, cfg.sigma0);
      apply_box(p.u, cfg.box);
      if (rec.due(k)) rec.record(k, p, 0, 0, 0, grad_u.norm(), grad_v.norm());
    }
  } catch (const NumericError& e) {
    throw SolverAbort("gd_alternating: aborted at u-update " + std::to_string(k) + ": " +
                          e.what(),
                      k, std::move(rec.trace));
  }
  res.wall_seconds = rec.elapsed();
  res.point = std::move(p);
  res.trace = std::move(rec.trace);
  return res;
}

}  // namespace bilevel
