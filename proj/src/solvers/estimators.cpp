#include <vector>

#include "recorder.hpp"

namespace bilevel {
namespace {

void check_unroll_args(const ProblemOracle& oracle, const RealVec& u, const RealVec& v0, int T,
                       double rho) {
  require(T >= 1, "hypergradient: T must be >= 1");
  require(rho > 0, "hypergradient: rho must be > 0");
  oracle.check_point(Point{u, v0});
}

HypergradResult rmd(const CountedOracle& o, const RealVec& u, const RealVec& v0, int T,
                    double rho) {
  // Forward: v_{t+1} = v_t - rho grad_v g(u, v_t), keeping v_0 .. v_T.
  std::vector<RealVec> traj;
  traj.reserve(static_cast<std::size_t>(T) + 1);
  traj.push_back(v0);
  Point p{u, v0};
  for (int t = 0; t < T; ++t) {
    p.v = traj.back();
    traj.push_back(sgd_step(p.v, o.grad_v_g(p), rho));
  }
  if (auto* c = o.counters()) c->note_storage(static_cast<std::int64_t>(traj.size()));

  // Reverse: p_{t-1} = p_t + B_t q_t, q_{t-1} = A_t q_t with A_t, B_t taken at v_{t-1}.
  p.v = traj.back();
  RealVec q = o.grad_v_f(p);
  RealVec grad = o.grad_u_f(p);
  for (int t = T; t >= 1; --t) {
    p.v = traj[static_cast<std::size_t>(t) - 1];
    grad -= rho * o.jvp(p, q);
    q -= rho * o.hvp(p, q);
  }
  return {std::move(grad), std::move(traj.back())};
}

HypergradResult fmd(const CountedOracle& o, const RealVec& u, const RealVec& v0, int T,
                    double rho) {
  const ProblemOracle& oracle = o.raw();
  Point p{u, v0};
  RealMat P = RealMat::Zero(oracle.dim_u, oracle.dim_v);
  if (auto* c = o.counters()) c->note_storage(oracle.dim_u + 1);
  for (int t = 0; t < T; ++t) {
    // P_{t+1} = P_t (I - rho H) - rho J, all at v_t.
    const RealMat H = o.hess_vv_g(p);
    const RealMat J = o.jac_uv_g(p);
    const RealVec gv = o.grad_v_g(p);
    P -= rho * (P * H + J);
    p.v = sgd_step(p.v, gv, rho);
  }
  RealVec grad = o.grad_u_f(p) + P * o.grad_v_f(p);
  return {std::move(grad), std::move(p.v)};
}

void require_fmd_capability(const ProblemOracle& oracle) {
  if (!oracle.has_dense())
    throw CapabilityError("fmd: oracle does not provide dense hess_vv_g / jac_uv_g");
  if (oracle.dim_u * oracle.dim_v > kFmdMaxState)
    throw CapabilityError("fmd: U*V = " + std::to_string(oracle.dim_u * oracle.dim_v) +
                          " exceeds the dense-state guard");
}

}  // namespace

HypergradResult rmd_hypergrad(const ProblemOracle& oracle, const RealVec& u, const RealVec& v0,
                              int T, double rho, OracleCounters* counters) {
  check_unroll_args(oracle, u, v0, T, rho);
  return rmd(CountedOracle(oracle, counters), u, v0, T, rho);
}

HypergradResult fmd_hypergrad(const ProblemOracle& oracle, const RealVec& u, const RealVec& v0,
                              int T, double rho, OracleCounters* counters) {
  check_unroll_args(oracle, u, v0, T, rho);
  require_fmd_capability(oracle);
  return fmd(CountedOracle(oracle, counters), u, v0, T, rho);
}

HypergradResult approxgrad_hypergrad(const ProblemOracle& oracle, const RealVec& u,
                                     const RealVec& v0, const ApproxGradOptions& opts,
                                     ApproxGradState& state, OracleCounters* counters) {
  require(opts.T_v >= 1 && opts.T_lin >= 1, "approxgrad: T_v and T_lin must be >= 1");
  require(opts.rho > 0 && opts.q_rate > 0, "approxgrad: step sizes must be > 0");
  require(opts.reg_lambda >= 0, "approxgrad: reg_lambda must be >= 0");
  oracle.check_point(Point{u, v0});
  const Index nv = oracle.dim_v;
  if (state.v_stepper.first_moment.size() != nv) state.v_stepper = {opts.v_stepper, nv};
  if (state.q_stepper.first_moment.size() != nv) {
    state.q_stepper = {opts.linear_solver == LinearSolver::kAdam ? StepperKind::kAdam
                                                                 : StepperKind::kPlainGd,
                       nv};
  }
  if (state.q.size() != nv) state.q = RealVec::Zero(nv);

  CountedOracle o(oracle, counters);
  if (counters) counters->note_storage(2);  // v and q
  Point p{u, v0};
  for (int t = 0; t < opts.T_v; ++t) {
    step_in_place(state.v_stepper, p.v, o.grad_v_g(p), opts.rho);
    if (opts.box) clamp_to_box(p.v, *opts.box);
  }

  const RealVec b = o.grad_v_f(p);
  RealVec& q = state.q;
  const double reg = opts.reg_lambda;
  auto apply = [&](const RealVec& x) -> RealVec { return o.hvp(p, x) + reg * x; };

  if (opts.linear_solver == LinearSolver::kConjugateGradient) {
    RealVec r = b - apply(q);
    RealVec d = r;
    double rr = r.squaredNorm();
    for (int s = 0; s < opts.T_lin && rr > 1e-300; ++s) {
      const RealVec Ad = apply(d);
      const double curv = d.dot(Ad);
      if (!(curv > 0)) break;
      const double alpha = rr / curv;
      q += alpha * d;
      r -= alpha * Ad;
      const double rr_new = r.squaredNorm();
      d = r + (rr_new / rr) * d;
      rr = rr_new;
    }
  } else {
    // Descent on 1/2 |(H + reg I) q - b|^2: two Hessian-vector products per step.
    for (int s = 0; s < opts.T_lin; ++s) {
      const RealVec r = apply(q) - b;
      step_in_place(state.q_stepper, q, apply(r), opts.q_rate);
    }
  }
  // Diagnostic only; bypasses the counters.
  state.residual = (oracle.hvp_vv_g(p, q) + reg * q - b).norm();

  RealVec grad = o.grad_u_f(p) - o.jvp(p, q);
  return {std::move(grad), std::move(p.v)};
}

HypergradResult approxgrad_hypergrad(const ProblemOracle& oracle, const RealVec& u,
                                     const RealVec& v0, int T_v, int T_lin, double rho,
                                     double reg_lambda, OracleCounters* counters) {
  ApproxGradOptions opts;
  opts.T_v = T_v;
  opts.T_lin = T_lin;
  opts.rho = rho;
  opts.q_rate = rho;
  opts.reg_lambda = reg_lambda;
  ApproxGradState state;
  return approxgrad_hypergrad(oracle, u, v0, opts, state, counters);
}

SolveResult outer_loop(const ProblemOracle& oracle, Estimator estimator, const Point& init,
                       const PenaltyConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  oracle.check_point(init);
  if (estimator == Estimator::kFmd) require_fmd_capability(oracle);

  SolveResult res;
  CountedOracle o(oracle, &res.counters);
  detail::Recorder rec(oracle, cfg, hooks, res.counters);
  Point p = init;
  StepperState<double> u_state(cfg.stepper, oracle.dim_u);

  ApproxGradOptions ag;
  ag.T_v = cfg.T;
  ag.T_lin = cfg.T_lin > 0 ? cfg.T_lin : cfg.T;
  ag.rho = cfg.rho0;
  ag.q_rate = cfg.rho0;
  ag.reg_lambda = cfg.reg_lambda;
  ag.v_stepper = cfg.stepper;
  ag.linear_solver = cfg.linear_solver;
  ag.box = cfg.box;
  ApproxGradState ag_state;

  std::int64_t k = 0;
  try {
    for (k = 1; k <= cfg.K; ++k) {
      HypergradResult hg;
      switch (estimator) {
        case Estimator::kRmd: hg = rmd(o, p.u, p.v, cfg.T, cfg.rho0); break;
        case Estimator::kFmd: hg = fmd(o, p.u, p.v, cfg.T, cfg.rho0); break;
        case Estimator::kApproxGrad:
          hg = approxgrad_hypergrad(oracle, p.u, p.v, ag, ag_state, &res.counters);
          break;
      }
      // The unrolled trajectory itself is not projected; only the warm start is.
      p.v = cfg.box ? project_box(hg.v_final, *cfg.box) : hg.v_final;
      step_in_place(u_state, p.u, hg.hypergrad, cfg.sigma0);
      if (cfg.box) clamp_to_box(p.u, *cfg.box);
      if (rec.due(k)) rec.record(k, p, 0, 0, 0, hg.hypergrad.norm(), 0);
    }
  } catch (const NumericError& e) {
    throw SolverAbort(to_string(estimator) + ": aborted at u-update " + std::to_string(k) +
                          ": " + e.what(),
                      k, std::move(rec.trace));
  }
  res.wall_seconds = rec.elapsed();
  res.point = std::move(p);
  res.trace = std::move(rec.trace);
  return res;
}

}  // namespace bilevel
