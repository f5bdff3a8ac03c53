#pragma once

#include "bilevel/core.hpp"
#include "bilevel/oracle.hpp"

namespace bilevel {

inline constexpr double kSingularConditionCap = 1e12;

/// 2-norm condition number of a square matrix (inf when singular).
double condition_number(const RealMat& m);

/// grad_u f - J H^{-1} grad_v f at p, through a dense solve.
/// Throws SingularityError when cond(H) exceeds `condition_cap`.
RealVec exact_hypergrad(const ProblemOracle& oracle, const Point& p,
                        double condition_cap = kSingularConditionCap);

/// Minimises g(u, .) from `v_start` until |grad_v g| <= inner_tol.
/// Throws ConvergenceError if the tolerance is not reached.
RealVec solve_lower_level(const ProblemOracle& oracle, const RealVec& u, const RealVec& v_start,
                          double inner_tol);

/// Central differences of u -> f(u, v*(u)); each perturbed inner solve is
/// warm-started from v*(u). `v_start` may be empty (zeros).
RealVec fd_hypergrad(const ProblemOracle& oracle, const RealVec& u, double inner_tol,
                     double fd_eps, const RealVec& v_start = {});

/// Minimises the penalty function over v at fixed u and gamma, then compares
/// grad_u f~ with the exact hypergradient at the minimiser. Returns
/// |grad_u f~ - exact| / max(1, |exact|). Requires an unconstrained oracle.
double verify_lemma3(const ProblemOracle& oracle, const RealVec& u, double gamma,
                     double inner_tol, const RealVec& v_start = {});

struct KKTReport {
  double feasibility = 0;      // |(h; grad_v g)|
  double stationarity = 0;     // |grad_w f - J^T mu| with least-squares mu
  RealVec multiplier;          // least-squares mu
  RealVec penalty_multiplier;  // -gamma (h; grad_v g)
  Index jacobian_rank = 0;
  Index constraint_count = 0;
};

/// KKT residual of  min_{u,v} f  s.t.  h = 0, grad_v g = 0  at p.
KKTReport kkt_residual(const ProblemOracle& oracle, const Point& p, double gamma);

}  // namespace bilevel
