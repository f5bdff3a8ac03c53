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

}  // namespace

TEST(ExactHypergrad, ClosedFormScalar) {
  const ProblemOracle o = make_synthetic(1, 1, RngSeed{0}).oracle;
  EXPECT_NEAR(exact_hypergrad(o, pt(0.5, 0.5))[0], 0.0, 1e-15);
  EXPECT_NEAR(exact_hypergrad(o, pt(0.3, 0.7))[0], 4 * 0.3 - 2, 1e-14);
}

TEST(ExactHypergrad, SingularExamplesThrow) {
  for (int id : {3, 4}) {
    const ProblemInstance inst = make_synthetic(id, 10, RngSeed{1});
    EXPECT_THROW(exact_hypergrad(inst.oracle, inst.init_sampler(RngSeed{2})), SingularityError);
  }
}

TEST(FdHypergrad, MatchesExactOnExample1) {
  const ProblemOracle o = make_synthetic(1, 10, RngSeed{0}).oracle;
  const RealVec u = RealVec::Constant(10, 0.3);
  const RealVec v = solve_lower_level(o, u, {}, 1e-10);
  const RealVec exact = exact_hypergrad(o, Point{u, v});
  EXPECT_LT(relative_error(fd_hypergrad(o, u, 1e-10, 1e-5), exact), 1e-4);
}

TEST(FdHypergrad, DecoupledIsPlainDifferences) {
  ProblemOracle o;
  o.dim_u = 2;
  o.dim_v = 2;
  o.eval_f = [](const Point& p) { return std::sin(p.u[0]) * p.u[1] + p.u.squaredNorm(); };
  o.eval_g = [](const Point& p) { return p.v.squaredNorm(); };
  o.grad_v_g = [](const Point& p) -> RealVec { return 2.0 * p.v; };
  const RealVec u = (RealVec(2) << 0.4, -1.3).finished();
  const RealVec expect = (RealVec(2) << std::cos(0.4) * -1.3 + 0.8, std::sin(0.4) - 2.6).finished();
  const RealVec fd = fd_hypergrad(o, u, 1e-12, 1e-5);
  EXPECT_LT((fd - expect).norm(), 1e-8);
}

TEST(FdHypergrad, RidgeMatchesExact) {
  const ProblemInstance inst = make_hyperparam_ridge(RngSeed{3}, 80, 30, 0.5);
  for (double u : {std::log(0.5), std::log(0.1), std::log(2.0)}) {
    const RealVec uu = RealVec::Constant(1, u);
    const RealVec w = ridge_solution(*inst.data, u);
    const RealVec exact = exact_hypergrad(inst.oracle, Point{uu, w});
    // Closed form validation loss differentiated numerically.
    const double h = 1e-5;
    const double fd = (ridge_validation_loss(*inst.data, u + h) -
                       ridge_validation_loss(*inst.data, u - h)) / (2 * h);
    EXPECT_LT(std::abs(exact[0] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << "u=" << u;
    EXPECT_LT(relative_error(fd_hypergrad(inst.oracle, uu, 1e-10, 1e-5, w), exact), 1e-4);
  }
}

TEST(CrossOracle, QuadraticAgreement) {
  const ProblemInstance inst = make_random_quadratic(RngSeed{2}, 5, 5);
  const ProblemOracle& o = inst.oracle;
  const Point start = inst.init_sampler(RngSeed{4});
  const RealVec v = solve_lower_level(o, start.u, start.v, 1e-12);
  const Point p{start.u, v};
  const RealVec exact = exact_hypergrad(o, p);
  const double rho = 0.2;  // Hessian spectrum in [1, 4]
  const RealVec rmd = rmd_hypergrad(o, p.u, v, 500, rho).hypergrad;
  const RealVec fmd = fmd_hypergrad(o, p.u, v, 500, rho).hypergrad;
  const RealVec fd = fd_hypergrad(o, p.u, 1e-12, 1e-5, v);
  ApproxGradOptions cg;
  cg.linear_solver = LinearSolver::kConjugateGradient;
  cg.v_stepper = StepperKind::kPlainGd;
  cg.rho = rho;
  cg.T_lin = 20;
  ApproxGradState st;
  const RealVec ag_cg = approxgrad_hypergrad(o, p.u, v, cg, st).hypergrad;
  for (const RealVec* x : {&rmd, &fmd, &fd, &ag_cg}) EXPECT_LT(relative_error(*x, exact), 1e-4);
}

TEST(Lemma3, Example1GammaInvariant) {
  const ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  Rng rng = make_rng(RngSeed{5});
  const RealVec u = uniform_vector(10, -5, 5, rng);
  for (double gamma : {1e-2, 0.1, 1.0, 10.0, 1e3, 1e4})
    EXPECT_LT(verify_lemma3(inst.oracle, u, gamma, 1e-10), 1e-6) << "gamma " << gamma;
}

TEST(Lemma3, NonQuadraticProblems) {
  ProblemParams pp;
  pp.n_train = 40;
  pp.n_val = 20;
  for (const char* name : {"quadratic", "ridge", "importance", "poison"}) {
    pp.name = name;
    const ProblemInstance inst = make_problem(pp, RngSeed{1});
    const Point x = inst.init_sampler(RngSeed{2});
    for (double gamma : {1e-2, 1.0, 1e2})
      EXPECT_LT(verify_lemma3(inst.oracle, x.u, gamma, 1e-10, x.v), 1e-6) << name;
  }
}

TEST(Lemma3, RejectsConstraints) {
  const ProblemInstance inst = make_constrained_toy(RngSeed{0});
  EXPECT_THROW(verify_lemma3(inst.oracle, RealVec::Zero(2), 1.0, 1e-10), ContractViolation);
}

TEST(Kkt, Example1OptimumIsExact) {
  const ProblemOracle o = make_synthetic(1, 10, RngSeed{0}).oracle;
  const Point opt{RealVec::Constant(10, 0.5), RealVec::Constant(10, 0.5)};
  const KKTReport r = kkt_residual(o, opt, 1.0);
  EXPECT_EQ(r.feasibility, 0.0);
  EXPECT_LT(r.stationarity, 1e-14);
  EXPECT_LT((r.multiplier - RealVec::Constant(10, 0.5)).norm(), 1e-12);
}

TEST(Kkt, RandomPointIsNotStationary) {
  const ProblemInstance inst = make_synthetic(1, 10, RngSeed{0});
  const KKTReport r = kkt_residual(inst.oracle, inst.init_sampler(RngSeed{17}), 1.0);
  EXPECT_GT(r.stationarity, 0.1);
}

TEST(Kkt, ConstrainedOptimum) {
  const ProblemInstance inst = make_constrained_toy(RngSeed{0});
  const Point opt{(RealVec(2) << 0.5, 0.0).finished(), RealVec::Constant(1, 0.5)};
  const KKTReport r = kkt_residual(inst.oracle, opt, 1.0);
  EXPECT_LT(r.feasibility, 1e-6);
  EXPECT_LT(r.stationarity, 1e-3);
}
