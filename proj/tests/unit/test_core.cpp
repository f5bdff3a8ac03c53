#include <gtest/gtest.h>

#include <cmath>

#include "bilevel/core.hpp"

using namespace bilevel;

namespace {

RealVec vec(std::initializer_list<double> xs) {
  RealVec v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  StepperState<double> s(StepperKind::kAdam, 3);
  const RealVec x = vec({0.3, -1.0, 2.0});
  const RealVec y = adam_step(s, x, RealVec::Zero(3), 0.1);
  EXPECT_EQ(y, x);
  EXPECT_EQ(s.steps, 1);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  for (double g : {1e-3, 0.5, -7.0, 1e4}) {
    StepperState<double> s(StepperKind::kAdam, 1);
    const RealVec y = adam_step(s, vec({0.0}), vec({g}), 0.1);
    const double expect = 0.1 * std::abs(g) / (std::abs(g) + 1e-8);
    EXPECT_NEAR(std::abs(y[0]), expect, 1e-12) << "g=" << g;
    EXPECT_LT(y[0] * g, 0);
  }
}

TEST(Adam, MinimisesSquare) {
  StepperState<double> s(StepperKind::kAdam, 1);
  RealVec x = vec({1.0});
  for (int i = 0; i < 1000; ++i) adam_update(s, x, (2.0 * x).eval(), 0.01);
  EXPECT_LT(std::abs(x[0]), 0.05);
}

TEST(Adam, ZeroBetasGiveSignDescent) {
  StepperState<double> s(StepperKind::kAdam, 4);
  s.beta1 = 0;
  s.beta2 = 0;
  s.eps_hat = 1e-12;
  const RealVec x = vec({1.0, 2.0, -3.0, 0.5});
  const RealVec g = vec({0.3, -2.0, 1e-3, -40.0});
  for (int k = 0; k < 3; ++k) {
    const RealVec y = adam_step(s, x, g, 0.25);
    for (Index i = 0; i < 4; ++i)
      EXPECT_NEAR(y[i], x[i] - 0.25 * (g[i] > 0 ? 1 : -1), 1e-6);
  }
}

TEST(Adam, Deterministic) {
  StepperState<double> a(StepperKind::kAdam, 2), b(StepperKind::kAdam, 2);
  RealVec x = vec({1.0, -1.0}), y = x;
  for (int i = 0; i < 50; ++i) {
    const RealVec g = vec({std::sin(i * 1.0), std::cos(i * 0.3)});
    adam_update(a, x, g, 0.01);
    adam_update(b, y, g, 0.01);
  }
  EXPECT_EQ(x, y);
  EXPECT_EQ(a.first_moment, b.first_moment);
  EXPECT_EQ(a.second_moment, b.second_moment);
}

TEST(Adam, RunningPowersMatchPow) {
  StepperState<double> s(StepperKind::kAdam, 1);
  RealVec x = vec({0.0});
  for (int i = 0; i < 200; ++i) adam_update(s, x, vec({1.0}), 1e-3);
  EXPECT_NEAR(s.beta1_power, std::pow(0.9, 200), 1e-15);
  EXPECT_NEAR(s.beta2_power, std::pow(0.999, 200), 1e-14);
}

TEST(Adam, RejectsBadArguments) {
  StepperState<double> s(StepperKind::kAdam, 2);
  EXPECT_THROW(adam_step(s, RealVec::Zero(2), RealVec::Zero(3), 0.1), ContractViolation);
  EXPECT_THROW(adam_step(s, RealVec::Zero(2), RealVec::Zero(2), 0.0), ContractViolation);
  RealVec bad = RealVec::Zero(2);
  bad[1] = std::nan("");
  EXPECT_THROW(adam_step(s, RealVec::Zero(2), bad, 0.1), NumericError);
}

TEST(Sgd, HandValues) {
  EXPECT_EQ(sgd_step(vec({1, 1}), vec({2, -2}), 0.5), vec({0, 2}));
  EXPECT_EQ(sgd_step(vec({4, -2}), RealVec::Zero(2), 0.5), vec({4, -2}));
  EXPECT_NEAR(sgd_step(vec({0.3}), vec({-0.4}), 0.1)[0], 0.34, 1e-15);
}

TEST(Stepper, PlainGdCountsSteps) {
  StepperState<double> s(StepperKind::kPlainGd, 2);
  RealVec x = vec({1, 1});
  step_in_place(s, x, vec({2, -2}), 0.5);
  EXPECT_EQ(x, vec({0, 2}));
  EXPECT_EQ(s.steps, 1);
}

TEST(Box, ProjectsAndIsIdempotent) {
  const BoxBounds box{-5, 5};
  EXPECT_EQ(project_box(vec({6, -7, 0}), box), vec({5, -5, 0}));
  EXPECT_EQ(project_box(vec({1, -2}), box), vec({1, -2}));
  EXPECT_EQ(project_box(vec({5.0001}), box), vec({5}));
  Rng rng = make_rng(RngSeed{3});
  const RealVec x = uniform_vector(50, -20, 20, rng);
  const RealVec once = project_box(x, box);
  EXPECT_EQ(project_box(once, box), once);
  RealVec y = x;
  clamp_to_box(y, box);
  EXPECT_EQ(y, once);
}

TEST(Random, GaussianMatrixDeterministicAndRankDeficientGram) {
  const RealMat A = gaussian_matrix(5, 10, RngSeed{42});
  EXPECT_EQ(A, gaussian_matrix(5, 10, RngSeed{42}));
  EXPECT_NE(A, gaussian_matrix(5, 10, RngSeed{43}));
  const RealMat G = A.transpose() * A;
  Eigen::FullPivLU<RealMat> lu(G);
  lu.setThreshold(1e-10);
  EXPECT_LE(lu.rank(), 5);
}

TEST(Random, GaussianMeanNearZero) {
  const RealMat A = gaussian_matrix(1000, 1000, RngSeed{7});
  EXPECT_LT(std::abs(A.mean()), 0.01);
}

TEST(Random, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(RngSeed{1}, 1).seed, derive_seed(RngSeed{1}, 2).seed);
  EXPECT_EQ(derive_seed(RngSeed{1}, 1).seed, derive_seed(RngSeed{1}, 1).seed);
}

TEST(Finite, DetectsNanAndInf) {
  RealVec x = RealVec::Ones(5);
  EXPECT_TRUE(all_finite(x));
  x[2] = INFINITY;
  EXPECT_FALSE(all_finite(x));
  x[2] = std::nan("");
  EXPECT_FALSE(all_finite(x));
  x[2] = 1e308;
  x[3] = 1e308;
  EXPECT_TRUE(all_finite(x));  // large but finite entries must not overflow the check
}
