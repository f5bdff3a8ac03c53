#include "bilevel/oracle.hpp"

#include <cmath>
#include <memory>
#include <type_traits>
#include <sstream>

namespace bilevel {
namespace {

template <typename T>
const T& checked(const T& value, const char* name) {
  if constexpr (std::is_same_v<T, double>) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite value from ") + name);
  } else {
    if (!all_finite(value)) throw NumericError(std::string("non-finite value from ") + name);
  }
  return value;
}

void require_callback(bool present, const char* name) {
  if (!present) throw CapabilityError(std::string("oracle does not provide ") + name);
}

void require_equality(const ProblemOracle& o) {
  require(!o.has_constraints() || o.constraint_kind == ConstraintKind::kEquality,
          "penalty: inequality constraints must be converted with slackify first");
}

void bump(OracleCounters* c, std::int64_t OracleCounters::*field) {
  if (c) ++(c->*field);
}

}  // namespace

void ProblemOracle::check_point(const Point& p) const {
  if (p.u.size() != dim_u)
    throw ContractViolation("point: u has dimension " + std::to_string(p.u.size()) +
                            ", oracle expects " + std::to_string(dim_u));
  if (p.v.size() != dim_v)
    throw ContractViolation("point: v has dimension " + std::to_string(p.v.size()) +
                            ", oracle expects " + std::to_string(dim_v));
}

double CountedOracle::f(const Point& p) const {
  bump(c_, &OracleCounters::n_f);
  const double r = o_.eval_f(p);
  return checked(r, "eval_f");
}
double CountedOracle::g(const Point& p) const {
  bump(c_, &OracleCounters::n_g);
  const double r = o_.eval_g(p);
  return checked(r, "eval_g");
}
RealVec CountedOracle::grad_u_f(const Point& p) const {
  bump(c_, &OracleCounters::n_grad_u_f);
  RealVec r = o_.grad_u_f(p);
  checked(r, "grad_u_f");
  return r;
}
RealVec CountedOracle::grad_v_f(const Point& p) const {
  bump(c_, &OracleCounters::n_grad_v_f);
  RealVec r = o_.grad_v_f(p);
  checked(r, "grad_v_f");
  return r;
}
RealVec CountedOracle::grad_v_g(const Point& p) const {
  bump(c_, &OracleCounters::n_grad_v_g);
  RealVec r = o_.grad_v_g(p);
  checked(r, "grad_v_g");
  return r;
}
RealVec CountedOracle::hvp(const Point& p, const RealVec& q) const {
  bump(c_, &OracleCounters::n_hvp);
  RealVec r = o_.hvp_vv_g(p, q);
  checked(r, "hvp_vv_g");
  return r;
}
RealVec CountedOracle::jvp(const Point& p, const RealVec& q) const {
  bump(c_, &OracleCounters::n_jvp);
  RealVec r = o_.jvp_uv_g(p, q);
  checked(r, "jvp_uv_g");
  return r;
}
RealVec CountedOracle::h(const Point& p) const {
  require_callback(static_cast<bool>(o_.eval_h), "eval_h");
  RealVec r = o_.eval_h(p);
  checked(r, "eval_h");
  return r;
}
RealVec CountedOracle::jtvp_u_h(const Point& p, const RealVec& mu) const {
  require_callback(static_cast<bool>(o_.jtvp_u_h), "jtvp_u_h");
  RealVec r = o_.jtvp_u_h(p, mu);
  checked(r, "jtvp_u_h");
  return r;
}
RealVec CountedOracle::jtvp_v_h(const Point& p, const RealVec& mu) const {
  require_callback(static_cast<bool>(o_.jtvp_v_h), "jtvp_v_h");
  RealVec r = o_.jtvp_v_h(p, mu);
  checked(r, "jtvp_v_h");
  return r;
}
RealMat CountedOracle::hess_vv_g(const Point& p) const {
  require_callback(static_cast<bool>(o_.hess_vv_g), "hess_vv_g");
  bump(c_, &OracleCounters::n_dense_hess);
  RealMat r = o_.hess_vv_g(p);
  checked(r, "hess_vv_g");
  return r;
}
RealMat CountedOracle::jac_uv_g(const Point& p) const {
  require_callback(static_cast<bool>(o_.jac_uv_g), "jac_uv_g");
  bump(c_, &OracleCounters::n_dense_jac);
  RealMat r = o_.jac_uv_g(p);
  checked(r, "jac_uv_g");
  return r;
}

double penalty_value(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                     OracleCounters* counters) {
  require_equality(oracle);
  CountedOracle o(oracle, counters);
  double value = o.f(p);
  if (params.gamma == 0 && params.lambda == 0 && params.nu.size() == 0 &&
      params.nu_h.size() == 0)
    return value;
  const RealVec gv = o.grad_v_g(p);
  value += 0.5 * params.gamma * gv.squaredNorm();
  if (params.nu.size() > 0) value += params.nu.dot(gv);
  if (oracle.has_constraints()) {
    const RealVec hv = o.h(p);
    value += 0.5 * params.gamma * hv.squaredNorm();
    if (params.nu_h.size() > 0) value += params.nu_h.dot(hv);
  }
  if (params.lambda != 0) value += params.lambda * o.g(p);
  if (!std::isfinite(value)) throw NumericError("penalty_value: non-finite result");
  return value;
}

RealVec penalty_grad_v(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                       OracleCounters* counters) {
  return penalty_grad_v(CountedOracle(oracle, counters), p, params);
}

RealVec penalty_grad_v(const CountedOracle& o, const Point& p, const PenaltyParams& params) {
  const ProblemOracle& oracle = o.raw();
  require_equality(oracle);
  RealVec grad = o.grad_v_f(p);
  RealVec w = o.grad_v_g(p);
  if (params.lambda != 0) grad += params.lambda * w;
  // H (gamma grad_v g + nu) in one product.
  w *= params.gamma;
  if (params.nu.size() > 0) w += params.nu;
  grad += o.hvp(p, w);
  if (oracle.has_constraints()) {
    RealVec mu = params.gamma * o.h(p);
    if (params.nu_h.size() > 0) mu += params.nu_h;
    grad += o.jtvp_v_h(p, mu);
  }
  return grad;
}

RealVec penalty_grad_u(const CountedOracle& o, const Point& p, const PenaltyParams& params,
                       const RealVec& grad_v_g) {
  const ProblemOracle& oracle = o.raw();
  require_equality(oracle);
  RealVec grad = o.grad_u_f(p);
  RealVec w = params.gamma * grad_v_g;
  if (params.nu.size() > 0) w += params.nu;
  grad += o.jvp(p, w);
  if (oracle.has_constraints()) {
    RealVec mu = params.gamma * o.h(p);
    if (params.nu_h.size() > 0) mu += params.nu_h;
    grad += o.jtvp_u_h(p, mu);
  }
  return grad;
}

RealVec penalty_grad_u(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                       OracleCounters* counters) {
  CountedOracle o(oracle, counters);
  return penalty_grad_u(o, p, params, o.grad_v_g(p));
}

ProblemOracle slackify(const ProblemOracle& base) {
  require(base.dim_c >= 1, "slackify: oracle has no constraints");
  require(base.constraint_kind == ConstraintKind::kInequality,
          "slackify: constraints are already equalities");
  require_callback(base.eval_h && base.jtvp_u_h && base.jtvp_v_h, "constraint callbacks");

  const Index nu = base.dim_u;
  const Index nc = base.dim_c;
  ProblemOracle o;
  o.dim_u = nu + nc;
  o.dim_v = base.dim_v;
  o.dim_c = nc;
  o.constraint_kind = ConstraintKind::kEquality;

  auto b = std::make_shared<const ProblemOracle>(base);
  auto inner = [nu](const Point& p) { return Point{p.u.head(nu), p.v}; };
  auto pad = [nc](const RealVec& x) {
    RealVec out(x.size() + nc);
    out << x, RealVec::Zero(nc);
    return out;
  };
  o.eval_f = [b, inner](const Point& p) { return b->eval_f(inner(p)); };
  o.eval_g = [b, inner](const Point& p) { return b->eval_g(inner(p)); };
  o.grad_u_f = [b, inner, pad](const Point& p) { return pad(b->grad_u_f(inner(p))); };
  o.grad_v_f = [b, inner](const Point& p) { return b->grad_v_f(inner(p)); };
  o.grad_v_g = [b, inner](const Point& p) { return b->grad_v_g(inner(p)); };
  o.hvp_vv_g = [b, inner](const Point& p, const RealVec& q) {
    return b->hvp_vv_g(inner(p), q);
  };
  o.jvp_uv_g = [b, inner, pad](const Point& p, const RealVec& q) {
    return pad(b->jvp_uv_g(inner(p), q));
  };
  o.eval_h = [b, inner, nc](const Point& p) -> RealVec {
    return b->eval_h(inner(p)) + p.u.tail(nc).cwiseAbs2();
  };
  o.jtvp_u_h = [b, inner, nc](const Point& p, const RealVec& mu) {
    const RealVec head = b->jtvp_u_h(inner(p), mu);
    RealVec out(head.size() + nc);
    out << head, 2.0 * p.u.tail(nc).cwiseProduct(mu);
    return out;
  };
  o.jtvp_v_h = [b, inner](const Point& p, const RealVec& mu) {
    return b->jtvp_v_h(inner(p), mu);
  };
  if (base.has_dense()) {
    o.hess_vv_g = [b, inner](const Point& p) { return b->hess_vv_g(inner(p)); };
    o.jac_uv_g = [b, inner, nc](const Point& p) {
      const RealMat top = b->jac_uv_g(inner(p));
      RealMat out = RealMat::Zero(top.rows() + nc, top.cols());
      out.topRows(top.rows()) = top;
      return out;
    };
  }
  return o;
}

Point add_slacks(const ProblemOracle& original, const Point& p, double eps_slack) {
  require(original.dim_c >= 1 && original.eval_h, "add_slacks: oracle has no constraints");
  original.check_point(p);
  const RealVec hv = original.eval_h(p);
  RealVec u(p.u.size() + hv.size());
  u << p.u, (-hv).cwiseMax(eps_slack).cwiseSqrt();
  return Point{u, p.v};
}

double relative_error(const RealVec& approx, const RealVec& exact) {
  return (approx - exact).norm() / std::max(1.0, exact.norm());
}

double FdReport::max() const {
  return std::max({grad_u_f, grad_v_f, grad_v_g, hvp, jvp, jtvp_h, dense});
}

std::string FdReport::describe() const {
  std::ostringstream os;
  os << "grad_u_f=" << grad_u_f << " grad_v_f=" << grad_v_f << " grad_v_g=" << grad_v_g
     << " hvp=" << hvp << " jvp=" << jvp << " jtvp_h=" << jtvp_h << " dense=" << dense;
  return os.str();
}

FdReport fd_check_oracle(const ProblemOracle& o, const Point& p, double eps, RngSeed seed) {
  require(eps >= 1e-7 && eps <= 1e-3, "fd_check_oracle: eps must lie in [1e-7, 1e-3]");
  o.check_point(p);
  const Index nu = o.dim_u, nv = o.dim_v;

  auto fd_grad = [&](const std::function<double(const Point&)>& fn, bool along_u) {
    const Index n = along_u ? nu : nv;
    RealVec out(n);
    for (Index i = 0; i < n; ++i) {
      Point plus = p, minus = p;
      (along_u ? plus.u : plus.v)[i] += eps;
      (along_u ? minus.u : minus.v)[i] -= eps;
      out[i] = (fn(plus) - fn(minus)) / (2 * eps);
    }
    return out;
  };

  FdReport r;
  r.grad_u_f = relative_error(fd_grad(o.eval_f, true), o.grad_u_f(p));
  r.grad_v_f = relative_error(fd_grad(o.eval_f, false), o.grad_v_f(p));
  r.grad_v_g = relative_error(fd_grad(o.eval_g, false), o.grad_v_g(p));

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  auto unit = [&](Index n) {
    RealVec q(n);
    for (Index i = 0; i < n; ++i) q[i] = normal(rng);
    return RealVec(q / q.norm());
  };

  for (int trial = 0; trial < 3; ++trial) {
    const RealVec q = unit(nv);
    Point plus = p, minus = p;
    plus.v += eps * q;
    minus.v -= eps * q;
    const RealVec fd_hvp = (o.grad_v_g(plus) - o.grad_v_g(minus)) / (2 * eps);
    r.hvp = std::max(r.hvp, relative_error(fd_hvp, o.hvp_vv_g(p, q)));

    auto gq = [&](const Point& x) { return o.grad_v_g(x).dot(q); };
    r.jvp = std::max(r.jvp, relative_error(fd_grad(gq, true), o.jvp_uv_g(p, q)));

    if (o.has_constraints() && o.eval_h) {
      const RealVec mu = unit(o.dim_c);
      auto hmu = [&](const Point& x) { return o.eval_h(x).dot(mu); };
      r.jtvp_h = std::max({r.jtvp_h, relative_error(fd_grad(hmu, true), o.jtvp_u_h(p, mu)),
                           relative_error(fd_grad(hmu, false), o.jtvp_v_h(p, mu))});
    }
    if (o.has_dense()) {
      r.dense = std::max({r.dense, relative_error(o.hess_vv_g(p) * q, o.hvp_vv_g(p, q)),
                          relative_error(o.jac_uv_g(p) * q, o.jvp_uv_g(p, q))});
    }
  }
  return r;
}

}  // namespace bilevel
