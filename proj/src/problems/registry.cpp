#include <cmath>

#include "bilevel/problems.hpp"

namespace bilevel {

ProblemInstance make_random_quadratic(RngSeed seed, Index dim_u, Index dim_v) {
  require(dim_u >= 1 && dim_v >= 1, "make_random_quadratic: dims must be >= 1");
  Rng rng = make_rng(seed);
  const RealMat G = gaussian_matrix(dim_v, dim_v, derive_seed(seed, 1));
  const RealMat Q = Eigen::HouseholderQR<RealMat>(G).householderQ();
  const RealVec eig = uniform_vector(dim_v, 1.0, 4.0, rng);
  const RealMat H = Q * eig.asDiagonal() * Q.transpose();
  const RealMat C = gaussian_matrix(dim_u, dim_v, derive_seed(seed, 2));
  const RealVec c = uniform_vector(dim_v, -1.0, 1.0, rng);
  const RealVec a = uniform_vector(dim_u, -1.0, 1.0, rng);
  const RealVec b = uniform_vector(dim_v, -1.0, 1.0, rng);

  // g = v^T H v / 2 + u^T C v + c^T v
  // f = |u - a|^2 / 2 + |v - b|^2 / 2 + 0.1 sum sin(v)
  ProblemOracle o;
  o.dim_u = dim_u;
  o.dim_v = dim_v;
  o.eval_g = [=](const Point& p) { return 0.5 * p.v.dot(H * p.v) + p.u.dot(C * p.v) + c.dot(p.v); };
  o.grad_v_g = [=](const Point& p) -> RealVec { return H * p.v + C.transpose() * p.u + c; };
  o.hvp_vv_g = [=](const Point&, const RealVec& q) -> RealVec { return H * q; };
  o.jvp_uv_g = [=](const Point&, const RealVec& q) -> RealVec { return C * q; };
  o.hess_vv_g = [=](const Point&) { return H; };
  o.jac_uv_g = [=](const Point&) { return C; };
  o.eval_f = [=](const Point& p) {
    return 0.5 * (p.u - a).squaredNorm() + 0.5 * (p.v - b).squaredNorm() +
           0.1 * p.v.array().sin().sum();
  };
  o.grad_u_f = [=](const Point& p) -> RealVec { return p.u - a; };
  o.grad_v_f = [=](const Point& p) -> RealVec {
    return p.v - b + (0.1 * p.v.array().cos()).matrix();
  };

  ProblemInstance inst;
  inst.name = "quadratic";
  inst.oracle = std::move(o);
  inst.init_sampler = [dim_u, dim_v](RngSeed s) {
    Rng r = make_rng(s);
    Point p;
    p.u = uniform_vector(dim_u, -1.0, 1.0, r);
    p.v = uniform_vector(dim_v, -1.0, 1.0, r);
    return p;
  };
  return inst;
}

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names = {
      "example1", "example2",   "example3", "example4", "constrained",
      "ridge",    "importance", "poison",   "quadratic"};
  return names;
}

ProblemInstance make_problem(const ProblemParams& pp, RngSeed seed) {
  const std::string& n = pp.name;
  if (n.size() == 8 && n.rfind("example", 0) == 0 && n[7] >= '1' && n[7] <= '4')
    return make_synthetic(n[7] - '0', pp.dim, seed);
  if (n == "constrained") return make_constrained_toy(seed);
  if (n == "ridge") return make_hyperparam_ridge(seed, pp.n, pp.d, pp.reg_true);
  if (n == "importance")
    return make_importance_toy(seed, pp.n_train, pp.n_val, pp.noise_frac, pp.n_test);
  if (n == "poison") return make_poison_toy(seed, pp.n_train, pp.n_val, pp.n_poison, pp.n_test);
  if (n == "quadratic") return make_random_quadratic(seed, pp.dim_u, pp.dim_v);
  throw ContractViolation("unknown problem '" + n + "'");
}

}  // namespace bilevel
