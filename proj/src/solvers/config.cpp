#include "bilevel/solvers.hpp"

namespace bilevel {

std::string to_string(LinearSolver s) {
  switch (s) {
    case LinearSolver::kAdam: return "adam";
    case LinearSolver::kPlainGd: return "plain-gd";
    case LinearSolver::kConjugateGradient: return "cg";
  }
  return "?";
}

LinearSolver linear_solver_from_string(const std::string& name) {
  if (name == "adam") return LinearSolver::kAdam;
  if (name == "plain-gd" || name == "gd") return LinearSolver::kPlainGd;
  if (name == "cg") return LinearSolver::kConjugateGradient;
  throw ContractViolation("unknown linear solver '" + name + "'");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::kRmd: return "rmd";
    case Estimator::kFmd: return "fmd";
    case Estimator::kApproxGrad: return "approxgrad";
  }
  return "?";
}

Estimator estimator_from_string(const std::string& name) {
  if (name == "rmd") return Estimator::kRmd;
  if (name == "fmd") return Estimator::kFmd;
  if (name == "approxgrad") return Estimator::kApproxGrad;
  throw ContractViolation("unknown estimator '" + name + "'");
}

void PenaltyConfig::validate() const {
  require(K >= 1, "config: K must be >= 1");
  require(T >= 1, "config: T must be >= 1");
  require(T_lin >= 0, "config: T_lin must be >= 0");
  require(sigma0 > 0 && rho0 > 0, "config: step sizes must be positive");
  require(gamma0 > 0, "config: gamma0 must be > 0");
  require(eps0 > 0, "config: eps0 must be > 0");
  require(lambda0 >= 0, "config: lambda0 must be >= 0");
  require(c_gamma >= 1, "config: c_gamma must be >= 1");
  require(c_eps > 0 && c_eps <= 1, "config: c_eps must lie in (0, 1]");
  require(c_lambda > 0 && c_lambda <= 1, "config: c_lambda must lie in (0, 1]");
  require(c_step > 0 && c_step <= 1, "config: c_step must lie in (0, 1]");
  require(while_cap >= 1, "config: while_cap must be >= 1");
  require(reg_lambda >= 0, "config: reg_lambda must be >= 0");
  require(record_every >= 1 && record_every <= K, "config: record_every must lie in [1, K]");
  if (box) require(box->lo < box->hi, "config: box lo must be < hi");
}

}  // namespace bilevel
