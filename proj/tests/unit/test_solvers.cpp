#include <gtest/gtest.h>

#include <cmath>

#include "bilevel/hypergrad.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/solvers.hpp"

using namespace bilevel;

namespace {

Point pt(double u, double v) {
  return Point{RealVec::Constant(1, u), RealVec::Constant(1, v)};
}

ProblemOracle scalar_example() { return make_synthetic(1, 1, RngSeed{0}).oracle; }

PenaltyConfig paper_config(const ProblemInstance& inst) {
  PenaltyConfig c;
  c.box = inst.box;
  c.record_every = 1000;
  return c;
}

void expect_same_trace(const SolverTrace& a, const SolverTrace& b) {
  ASSERT_EQ(a.records.size(), b.records.size());
  EXPECT_EQ(a.phases, b.phases);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const TraceRecord &x = a.records[i], &y = b.records[i];
    EXPECT_EQ(x.k, y.k);
    EXPECT_EQ(x.gamma, y.gamma);
    EXPECT_EQ(x.eps, y.eps);
    EXPECT_EQ(x.f, y.f);
    EXPECT_EQ(x.g, y.g);
    EXPECT_EQ(x.grad_u_norm, y.grad_u_norm);
    EXPECT_EQ(x.grad_v_norm, y.grad_v_norm);
    EXPECT_EQ(x.counters.n_hvp, y.counters.n_hvp);
  }
}

}  // namespace

TEST(PenaltySolve, Example1Converges) {
  const ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  RunHooks hooks{inst.metric};
  const SolveResult r = penalty_solve(inst.oracle, inst.init_sampler(RngSeed{1}),
                                      paper_config(inst), hooks);
  EXPECT_LT(inst.metric(r.point), 1e-2);
  EXPECT_EQ(r.trace.records.back().k, 40000);
  EXPECT_EQ(r.trace.records.size(), 40u);
}

TEST(PenaltySolve, HugeGammaDrivesFeasibility) {
  ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  ProblemOracle& o = inst.oracle;
  o.eval_f = [](const Point&) { return 0.0; };
  o.grad_u_f = [](const Point& p) -> RealVec { return RealVec::Zero(p.u.size()); };
  o.grad_v_f = [](const Point& p) -> RealVec { return RealVec::Zero(p.v.size()); };
  PenaltyConfig c = paper_config(inst);
  c.gamma0 = 1e8;
  const SolveResult r = penalty_solve(o, inst.init_sampler(RngSeed{2}), c);
  EXPECT_LT(o.grad_v_g(r.point).norm(), 1e-3);
}

TEST(PenaltySolve, TerminatesNearKktPoint) {
  for (int id : {1, 2}) {
    const ProblemInstance inst = make_synthetic(id, 10, RngSeed{0});
    const SolveResult r = penalty_solve(inst.oracle, inst.init_sampler(RngSeed{3}),
                                        paper_config(inst));
    const KKTReport k = kkt_residual(inst.oracle, r.point, r.final_params.gamma);
    EXPECT_LE(inst.oracle.grad_v_g(r.point).norm(), 1e-3) << "example " << id;
    EXPECT_LE(k.stationarity, 1e-3) << "example " << id;
  }
}

TEST(PenaltySolve, ScheduleIsExactRecurrence) {
  const ProblemOracle o = scalar_example();
  PenaltyConfig c;
  c.K = 30;
  c.eps0 = 1e30;  // every u-update closes a phase
  c.c_gamma = 1.3;
  c.record_every = 1;
  const SolveResult r = penalty_solve(o, pt(2, -1), c);
  ASSERT_EQ(r.trace.records.size(), 30u);
  EXPECT_EQ(r.trace.phases, 30);
  double gamma = c.gamma0, eps = c.eps0;
  for (const TraceRecord& rec : r.trace.records) {
    EXPECT_EQ(rec.gamma, gamma) << "k=" << rec.k;
    EXPECT_EQ(rec.eps, eps) << "k=" << rec.k;
    gamma *= c.c_gamma;
    eps *= c.c_eps;
  }
  EXPECT_EQ(r.final_params.gamma, gamma);
}

TEST(PenaltySolve, WhileCapEndsStalledPhases) {
  const ProblemOracle o = scalar_example();
  PenaltyConfig c;
  c.K = 100;
  c.eps0 = 1e-30;
  c.c_eps = 1;
  c.while_cap = 10;
  c.record_every = 100;
  const SolveResult r = penalty_solve(o, pt(2, -1), c);
  EXPECT_EQ(r.trace.phases, 10);
  EXPECT_EQ(r.trace.cap_hits, 10);
}

TEST(PenaltySolve, Deterministic) {
  const ProblemInstance inst = make_synthetic(3, 10, RngSeed{4});
  PenaltyConfig c = paper_config(inst);
  c.K = 3000;
  c.record_every = 100;
  const Point x = inst.init_sampler(RngSeed{5});
  const SolveResult a = penalty_solve(inst.oracle, x, c), b = penalty_solve(inst.oracle, x, c);
  expect_same_trace(a.trace, b.trace);
  EXPECT_EQ(a.point.u, b.point.u);
  EXPECT_EQ(a.point.v, b.point.v);
}

TEST(PenaltySolve, ConstrainedToyReachesOptimum) {
  const ProblemInstance inst = make_constrained_toy(RngSeed{0});
  PenaltyConfig c = paper_config(inst);
  const SolveResult r = penalty_solve(inst.oracle, inst.init_sampler(RngSeed{6}), c);
  EXPECT_LT(inst.metric(r.point), 1e-2);
  EXPECT_NEAR(inst.oracle.eval_f(r.point), 0.5, 1e-2);
}

TEST(PenaltyAug, DegenerateConfigMatchesPenaltyBitForBit) {
  const ProblemInstance inst = make_synthetic(2, 10, RngSeed{0});
  PenaltyConfig c = paper_config(inst);
  c.K = 5000;
  c.record_every = 50;
  c.lambda0 = 0;
  c.nu0 = 0;
  c.c_lambda = 1;
  c.multiplier_updates = false;
  const Point x = inst.init_sampler(RngSeed{7});
  const SolveResult a = penalty_solve(inst.oracle, x, c);
  const SolveResult b = penalty_aug_solve(inst.oracle, x, c);
  expect_same_trace(a.trace, b.trace);
  EXPECT_EQ(a.point.u, b.point.u);
  EXPECT_EQ(a.point.v, b.point.v);
}

TEST(PenaltyAug, MultiplierUpdateHandTrace) {
  const ProblemOracle o = scalar_example();
  PenaltyConfig c;
  c.K = 1;
  c.T = 1;
  c.eps0 = 1e9;
  c.gamma0 = 3;
  c.nu0 = 0.25;
  c.record_every = 1;
  const SolveResult r = penalty_aug_solve(o, pt(0.1, 0.2), c);
  ASSERT_EQ(r.trace.phases, 1);
  const double expect = 0.25 + 3.0 * o.grad_v_g(r.point)[0];
  EXPECT_DOUBLE_EQ(r.final_params.nu[0], expect);
  EXPECT_DOUBLE_EQ(r.final_params.lambda, c.lambda0 * c.c_lambda);
  EXPECT_DOUBLE_EQ(r.final_params.gamma, 3.0 * c.c_gamma);
}

TEST(PenaltyAug, Example1InsensitiveToLambda0) {
  const ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  std::vector<Point> finals;
  for (double lambda0 : {0.0, 1e-4, 1e-2, 1.0}) {
    PenaltyConfig c = paper_config(inst);
    c.lambda0 = lambda0;
    const SolveResult r = penalty_aug_solve(inst.oracle, inst.init_sampler(RngSeed{8}), c);
    EXPECT_LT(inst.metric(r.point), 1e-2) << "lambda0 " << lambda0;
    finals.push_back(r.point);
  }
  for (const Point& p : finals) {
    const double d = std::sqrt((p.u - finals[0].u).squaredNorm() + (p.v - finals[0].v).squaredNorm());
    EXPECT_LT(d, 1e-2);
  }
}

TEST(GdAlternating, Example2MissesSolution) {
  const ProblemInstance inst = make_synthetic(2, 10, RngSeed{0});
  const SolveResult r = gd_alternating(inst.oracle, inst.init_sampler(RngSeed{9}),
                                       paper_config(inst));
  EXPECT_GT(inst.metric(r.point), 1e-1);
}

TEST(GdAlternating, DecoupledCaseAndCounters) {
  ProblemOracle o;
  o.dim_u = o.dim_v = 3;
  o.eval_f = [](const Point& p) { return p.u.squaredNorm() + p.v.squaredNorm(); };
  o.eval_g = [](const Point& p) { return p.v.squaredNorm(); };
  o.grad_u_f = [](const Point& p) -> RealVec { return 2.0 * p.u; };
  o.grad_v_f = [](const Point& p) -> RealVec { return 2.0 * p.v; };
  o.grad_v_g = [](const Point& p) -> RealVec { return 2.0 * p.v; };
  PenaltyConfig c;
  c.K = 5000;
  c.T = 4;
  c.sigma0 = c.rho0 = 1e-2;
  c.stepper = StepperKind::kPlainGd;
  c.record_every = c.K;
  const SolveResult r = gd_alternating(o, Point{RealVec::Ones(3), -RealVec::Ones(3)}, c);
  EXPECT_LT(std::sqrt(r.point.u.squaredNorm() + r.point.v.squaredNorm()), 1e-3);
  EXPECT_EQ(r.counters.n_grad_v_g, c.K * c.T);
  EXPECT_EQ(r.counters.n_hvp, 0);
  EXPECT_EQ(r.counters.n_jvp, 0);
}

TEST(Rmd, HandTrace) {
  const HypergradResult r = rmd_hypergrad(scalar_example(), RealVec::Zero(1), RealVec::Zero(1), 1, 0.1);
  EXPECT_NEAR(r.v_final[0], 0.2, 1e-15);
  EXPECT_NEAR(r.hypergrad[0], -0.08, 1e-15);
  EXPECT_THROW(rmd_hypergrad(scalar_example(), RealVec::Zero(1), RealVec::Zero(1), 0, 0.1),
               ContractViolation);
}

TEST(Fmd, HandTraceMatchesRmd) {
  const HypergradResult r = fmd_hypergrad(scalar_example(), RealVec::Zero(1), RealVec::Zero(1), 1, 0.1);
  EXPECT_NEAR(r.hypergrad[0], -0.08, 1e-15);
}

TEST(Fmd, AgreesWithRmdOnQuadratic) {
  const ProblemInstance inst = make_random_quadratic(RngSeed{3}, 5, 5);
  const Point x = inst.init_sampler(RngSeed{1});
  for (int T : {1, 7, 40}) {
    const RealVec a = rmd_hypergrad(inst.oracle, x.u, x.v, T, 0.1).hypergrad;
    const RealVec b = fmd_hypergrad(inst.oracle, x.u, x.v, T, 0.1).hypergrad;
    EXPECT_LT((a - b).norm() / std::max(1.0, a.norm()), 1e-10) << "T=" << T;
  }
}

TEST(Fmd, DecoupledLowerLevelGivesGradUf) {
  ProblemInstance inst = make_random_quadratic(RngSeed{3}, 4, 3);
  ProblemOracle& o = inst.oracle;
  o.jvp_uv_g = [](const Point& p, const RealVec&) -> RealVec { return RealVec::Zero(p.u.size()); };
  o.jac_uv_g = [](const Point& p) -> RealMat { return RealMat::Zero(p.u.size(), p.v.size()); };
  o.grad_v_g = [](const Point& p) -> RealVec { return p.v; };
  const Point x = inst.init_sampler(RngSeed{1});
  const HypergradResult r = fmd_hypergrad(o, x.u, x.v, 5, 0.1);
  EXPECT_EQ(r.hypergrad, o.grad_u_f(Point{x.u, r.v_final}));
}

TEST(Fmd, NeedsDenseBlocks) {
  ProblemOracle o = scalar_example();
  o.hess_vv_g = nullptr;
  EXPECT_THROW(fmd_hypergrad(o, RealVec::Zero(1), RealVec::Zero(1), 3, 0.1), CapabilityError);
  PenaltyConfig c;
  c.K = 10;
  c.record_every = 10;
  EXPECT_THROW(outer_loop(o, Estimator::kFmd, pt(0, 0), c), CapabilityError);
}

TEST(ApproxGrad, ExactSolveAtLowerOptimum) {
  ApproxGradOptions opts;
  opts.linear_solver = LinearSolver::kConjugateGradient;
  opts.v_stepper = StepperKind::kPlainGd;
  opts.rho = 0.1;
  opts.T_lin = 5;
  ApproxGradState st;
  const HypergradResult r = approxgrad_hypergrad(scalar_example(), RealVec::Constant(1, 0.5),
                                                 RealVec::Constant(1, 0.5), opts, st);
  EXPECT_NEAR(st.q[0], 0.5, 1e-15);
  EXPECT_NEAR(r.hypergrad[0], 0.0, 1e-15);
}

TEST(ApproxGrad, GradientLinearSolveMatchesDense) {
  const ProblemInstance inst = make_random_quadratic(RngSeed{6}, 5, 5);
  const Point x = inst.init_sampler(RngSeed{2});
  ApproxGradOptions opts;
  opts.v_stepper = StepperKind::kPlainGd;
  opts.rho = 1e-12;  // keep v where it is
  opts.linear_solver = LinearSolver::kPlainGd;
  opts.q_rate = 2.0 / 17.0;  // H^2 spectrum lies in [1, 16]
  opts.T_lin = 200;
  ApproxGradState st;
  approxgrad_hypergrad(inst.oracle, x.u, x.v, opts, st);
  const Point p{x.u, x.v - 1e-12 * inst.oracle.grad_v_g(x)};
  const RealVec dense = inst.oracle.hess_vv_g(p).ldlt().solve(inst.oracle.grad_v_f(p));
  EXPECT_LT(relative_error(st.q, dense), 1e-5);
}

TEST(ApproxGrad, SingularSystemStagnates) {
  const ProblemInstance inst = make_synthetic(3, 10, RngSeed{0});
  const Point x = inst.init_sampler(RngSeed{1});
  ApproxGradOptions opts;
  opts.T_lin = 200;
  opts.reg_lambda = 1e-4;
  ApproxGradState st;
  approxgrad_hypergrad(inst.oracle, x.u, x.v, opts, st);
  EXPECT_GT(st.residual, 1e-3);
}

TEST(OuterLoop, ApproxGradExample1Converges) {
  const ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  const SolveResult r = outer_loop(inst.oracle, Estimator::kApproxGrad,
                                   inst.init_sampler(RngSeed{10}), paper_config(inst));
  EXPECT_LT(inst.metric(r.point), 1e-2);
}

TEST(OuterLoop, RmdShortHorizonMissesExample2) {
  const ProblemInstance inst = make_synthetic(2, 10, RngSeed{0});
  PenaltyConfig c = paper_config(inst);
  c.T = 1;
  const SolveResult r = outer_loop(inst.oracle, Estimator::kRmd, inst.init_sampler(RngSeed{11}), c);
  EXPECT_GT(inst.metric(r.point), 1e-1);
}

// Per-hypergradient oracle tallies.
TEST(Counters, PenaltyPerUpdate) {
  const ProblemInstance inst = make_synthetic(1, 6, RngSeed{0});
  for (int T : {1, 5, 10}) {
    PenaltyConfig c;
    c.K = 1;
    c.T = T;
    c.record_every = 1;
    const SolveResult r = penalty_solve(inst.oracle, inst.init_sampler(RngSeed{1}), c);
    EXPECT_EQ(r.counters.n_hvp, T);
    EXPECT_EQ(r.counters.n_jvp, 1);
    EXPECT_EQ(r.counters.peak_stored_vecs, 1);
    c.K = 50;
    c.record_every = 50;
    const SolveResult many = penalty_solve(inst.oracle, inst.init_sampler(RngSeed{1}), c);
    EXPECT_EQ(many.counters.n_hvp, 50 * T);
    EXPECT_EQ(many.counters.n_jvp, 50);
  }
}

TEST(Counters, RmdStoresTrajectory) {
  const ProblemInstance inst = make_synthetic(1, 6, RngSeed{0});
  const Point x = inst.init_sampler(RngSeed{1});
  for (int T : {1, 5, 10}) {
    OracleCounters c;
    rmd_hypergrad(inst.oracle, x.u, x.v, T, 0.1, &c);
    EXPECT_EQ(c.n_hvp, T);
    EXPECT_EQ(c.n_jvp, T);
    EXPECT_EQ(c.peak_stored_vecs, T + 1);
  }
}

TEST(Counters, ApproxGradTwoHvpPerLinearStep) {
  const ProblemInstance inst = make_synthetic(1, 6, RngSeed{0});
  const Point x = inst.init_sampler(RngSeed{1});
  for (int T : {1, 5, 10}) {
    OracleCounters c;
    approxgrad_hypergrad(inst.oracle, x.u, x.v, T, T, 1e-3, 0.0, &c);
    EXPECT_EQ(c.n_hvp, 2 * T);
    EXPECT_EQ(c.n_jvp, 1);
    EXPECT_EQ(c.peak_stored_vecs, 2);
  }
}

TEST(Counters, FmdDenseCallsScaleWithT) {
  const ProblemInstance inst = make_synthetic(1, 6, RngSeed{0});
  const Point x = inst.init_sampler(RngSeed{1});
  for (int T : {1, 5, 10}) {
    OracleCounters c;
    fmd_hypergrad(inst.oracle, x.u, x.v, T, 0.1, &c);
    EXPECT_EQ(c.n_dense_hess, T);
    EXPECT_EQ(c.n_dense_jac, T);
    EXPECT_EQ(c.n_hvp + c.n_jvp, 0);
    EXPECT_EQ(c.peak_stored_vecs, inst.oracle.dim_u + 1);
  }
}

TEST(Config, RejectsBadValues) {
  PenaltyConfig c;
  c.T = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = PenaltyConfig{};
  c.c_gamma = 0.5;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = PenaltyConfig{};
  c.record_every = c.K + 1;
  EXPECT_THROW(c.validate(), ContractViolation);
}
