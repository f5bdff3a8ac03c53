#include "bilevel/hypergrad.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bilevel/minimize.hpp"

namespace bilevel {

double condition_number(const RealMat& m) {
  Eigen::JacobiSVD<RealMat> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double smin = s[s.size() - 1];
  if (smin <= 0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

RealVec exact_hypergrad(const ProblemOracle& oracle, const Point& p, double condition_cap) {
  if (!oracle.has_dense())
    throw CapabilityError("exact_hypergrad: oracle does not provide dense blocks");
  oracle.check_point(p);
  CountedOracle o(oracle);
  const RealMat H = o.hess_vv_g(p);
  Eigen::JacobiSVD<RealMat> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cond = s[s.size() - 1] > 0 ? s[0] / s[s.size() - 1]
                                          : std::numeric_limits<double>::infinity();
  if (!(cond <= condition_cap)) {
    std::ostringstream os;
    os << "exact_hypergrad: lower-level Hessian is singular or ill-conditioned (cond=" << cond
       << ")";
    throw SingularityError(os.str(), cond);
  }
  const RealVec q = svd.solve(o.grad_v_f(p));
  return o.grad_u_f(p) - o.jac_uv_g(p) * q;
}

RealVec solve_lower_level(const ProblemOracle& oracle, const RealVec& u, const RealVec& v_start,
                          double inner_tol) {
  const RealVec v0 = v_start.size() == 0 ? RealVec::Zero(oracle.dim_v) : v_start;
  oracle.check_point(Point{u, v0});
  ValueGrad fn = [&](const RealVec& v, RealVec& grad) {
    const Point p{u, v};
    grad = oracle.grad_v_g(p);
    return oracle.eval_g(p);
  };
  MinimizeOptions opts;
  opts.grad_tol = inner_tol;
  const MinimizeResult r = minimize_lbfgs(fn, v0, opts);
  if (!r.converged) {
    std::ostringstream os;
    os << "lower-level solve stalled at |grad_v g| = " << r.grad_norm << " > " << inner_tol
       << " after " << r.iterations << " iterations";
    throw ConvergenceError(os.str());
  }
  return r.x;
}

RealVec fd_hypergrad(const ProblemOracle& oracle, const RealVec& u, double inner_tol,
                     double fd_eps, const RealVec& v_start) {
  require(fd_eps > 0, "fd_hypergrad: fd_eps must be > 0");
  const RealVec v_star = solve_lower_level(oracle, u, v_start, inner_tol);
  RealVec out(oracle.dim_u);
  for (Index i = 0; i < oracle.dim_u; ++i) {
    RealVec up = u, um = u;
    up[i] += fd_eps;
    um[i] -= fd_eps;
    const double fp = oracle.eval_f(Point{up, solve_lower_level(oracle, up, v_star, inner_tol)});
    const double fm = oracle.eval_f(Point{um, solve_lower_level(oracle, um, v_star, inner_tol)});
    out[i] = (fp - fm) / (2 * fd_eps);
  }
  return out;
}

double verify_lemma3(const ProblemOracle& oracle, const RealVec& u, double gamma,
                     double inner_tol, const RealVec& v_start) {
  require(!oracle.has_constraints(), "verify_lemma3: requires an unconstrained oracle (h = 0)");
  require(gamma > 0, "verify_lemma3: gamma must be > 0");
  const RealVec v0 = v_start.size() == 0 ? RealVec::Zero(oracle.dim_v) : v_start;
  oracle.check_point(Point{u, v0});

  PenaltyParams params;
  params.gamma = gamma;
  ValueGrad fn = [&](const RealVec& v, RealVec& grad) {
    const Point p{u, v};
    grad = penalty_grad_v(oracle, p, params);
    return penalty_value(oracle, p, params);
  };
  MinimizeOptions opts;
  opts.grad_tol = inner_tol;
  const MinimizeResult r = minimize_lbfgs(fn, v0, opts);
  if (!r.converged) {
    std::ostringstream os;
    os << "verify_lemma3: inner penalty minimisation stalled at |grad_v f~| = " << r.grad_norm;
    throw ConvergenceError(os.str());
  }
  const Point p{u, r.x};
  const RealVec exact = exact_hypergrad(oracle, p);
  return relative_error(penalty_grad_u(oracle, p, params), exact);
}

KKTReport kkt_residual(const ProblemOracle& oracle, const Point& p, double gamma) {
  if (!oracle.has_dense())
    throw CapabilityError("kkt_residual: oracle does not provide dense blocks");
  oracle.check_point(p);
  const Index nu = oracle.dim_u, nv = oracle.dim_v, nc = oracle.dim_c;
  CountedOracle o(oracle);

  // Constraint vector (h; grad_v g) and its Jacobian w.r.t. w = (u, v).
  RealVec gt(nc + nv);
  RealMat J(nc + nv, nu + nv);
  if (nc > 0) {
    gt.head(nc) = o.h(p);
    for (Index c = 0; c < nc; ++c) {
      const RealVec e = RealVec::Unit(nc, c);
      J.block(c, 0, 1, nu) = o.jtvp_u_h(p, e).transpose();
      J.block(c, nu, 1, nv) = o.jtvp_v_h(p, e).transpose();
    }
  }
  gt.tail(nv) = o.grad_v_g(p);
  J.block(nc, 0, nv, nu) = o.jac_uv_g(p).transpose();
  J.block(nc, nu, nv, nv) = o.hess_vv_g(p);

  RealVec grad_f(nu + nv);
  grad_f << o.grad_u_f(p), o.grad_v_f(p);

  const RealMat Jt = J.transpose();
  Eigen::CompleteOrthogonalDecomposition<RealMat> cod(Jt);
  KKTReport rep;
  rep.multiplier = cod.solve(grad_f);
  rep.stationarity = (grad_f - Jt * rep.multiplier).norm();
  rep.feasibility = gt.norm();
  rep.penalty_multiplier = -gamma * gt;
  rep.jacobian_rank = cod.rank();
  rep.constraint_count = nc + nv;
  return rep;
}

}  // namespace bilevel
