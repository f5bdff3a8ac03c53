#include <memory>

#include "bilevel/problems.hpp"

namespace bilevel {
namespace {

constexpr BoxBounds kSyntheticBox{-5.0, 5.0};

std::function<Point(RngSeed)> uniform_init(Index nu, Index nv, BoxBounds box) {
  return [=](RngSeed seed) {
    Rng rng = make_rng(seed);
    Point p;
    p.u = uniform_vector(nu, box.lo, box.hi, rng);
    p.v = uniform_vector(nv, box.lo, box.hi, rng);
    return p;
  };
}

// f = |u|^2 + |v|^2, g = (1 - u - v)^T M (1 - u - v); M = I gives example 1.
ProblemOracle sum_oracle(Index n, std::shared_ptr<const RealMat> M) {
  ProblemOracle o;
  o.dim_u = o.dim_v = n;
  auto resid = [](const Point& p) -> RealVec { return (1.0 - p.u.array() - p.v.array()).matrix(); };
  auto mul = [M](const RealVec& x) -> RealVec { return M ? RealVec(*M * x) : x; };
  o.eval_f = [](const Point& p) { return p.u.squaredNorm() + p.v.squaredNorm(); };
  o.eval_g = [=](const Point& p) {
    const RealVec r = resid(p);
    return r.dot(mul(r));
  };
  o.grad_u_f = [](const Point& p) -> RealVec { return 2.0 * p.u; };
  o.grad_v_f = [](const Point& p) -> RealVec { return 2.0 * p.v; };
  o.grad_v_g = [=](const Point& p) -> RealVec { return -2.0 * mul(resid(p)); };
  o.hvp_vv_g = [=](const Point&, const RealVec& q) -> RealVec { return 2.0 * mul(q); };
  o.jvp_uv_g = [=](const Point&, const RealVec& q) -> RealVec { return 2.0 * mul(q); };
  const RealMat dense = M ? RealMat(2.0 * *M) : RealMat(2.0 * RealMat::Identity(n, n));
  o.hess_vv_g = [dense](const Point&) { return dense; };
  o.jac_uv_g = [dense](const Point&) { return dense; };
  return o;
}

// f = |v|^2 - (u - v)^T M (u - v), g = (u - v)^T M (u - v); M = I gives example 2.
ProblemOracle diff_oracle(Index n, std::shared_ptr<const RealMat> M) {
  ProblemOracle o;
  o.dim_u = o.dim_v = n;
  auto mul = [M](const RealVec& x) -> RealVec { return M ? RealVec(*M * x) : x; };
  o.eval_f = [=](const Point& p) {
    const RealVec d = p.u - p.v;
    return p.v.squaredNorm() - d.dot(mul(d));
  };
  o.eval_g = [=](const Point& p) {
    const RealVec d = p.u - p.v;
    return d.dot(mul(d));
  };
  o.grad_u_f = [=](const Point& p) -> RealVec { return -2.0 * mul(p.u - p.v); };
  o.grad_v_f = [=](const Point& p) -> RealVec { return 2.0 * p.v + 2.0 * mul(p.u - p.v); };
  o.grad_v_g = [=](const Point& p) -> RealVec { return -2.0 * mul(p.u - p.v); };
  o.hvp_vv_g = [=](const Point&, const RealVec& q) -> RealVec { return 2.0 * mul(q); };
  o.jvp_uv_g = [=](const Point&, const RealVec& q) -> RealVec { return -2.0 * mul(q); };
  const RealMat M2 = M ? RealMat(2.0 * *M) : RealMat(2.0 * RealMat::Identity(n, n));
  o.hess_vv_g = [M2](const Point&) { return M2; };
  o.jac_uv_g = [M2](const Point&) -> RealMat { return -M2; };
  return o;
}

}  // namespace

ProblemInstance make_synthetic(int id, Index dim, RngSeed seed) {
  require(id >= 1 && id <= 4, "make_synthetic: id must be 1..4");
  require(dim >= 1, "make_synthetic: dim must be >= 1");
  if (id >= 3) require(dim % 2 == 0, "make_synthetic: examples 3-4 need an even dim");

  ProblemInstance inst;
  inst.name = "example" + std::to_string(id);
  inst.box = kSyntheticBox;
  inst.init_sampler = uniform_init(dim, dim, kSyntheticBox);

  std::shared_ptr<const RealMat> M;
  if (id >= 3) {
    inst.A = gaussian_matrix(dim / 2, dim, derive_seed(seed, 3));
    const RealMat AAt = inst.A * inst.A.transpose();
    inst.projector = inst.A.transpose() * AAt.ldlt().solve(inst.A);
    M = std::make_shared<const RealMat>(inst.A.transpose() * inst.A);
  }

  switch (id) {
    case 1:
      inst.oracle = sum_oracle(dim, nullptr);
      inst.metric = [](const Point& p) {
        return std::sqrt((p.u.array() - 0.5).square().sum() + (p.v.array() - 0.5).square().sum());
      };
      break;
    case 2:
      inst.oracle = diff_oracle(dim, nullptr);
      inst.metric = [](const Point& p) {
        return std::sqrt(p.u.squaredNorm() + p.v.squaredNorm());
      };
      break;
    case 3: {
      inst.oracle = sum_oracle(dim, M);
      inst.metric = [P = inst.projector](const Point& p) {
        const RealVec du = (p.u.array() - 0.5).matrix();
        const RealVec dv = (p.v.array() - 0.5).matrix();
        return std::sqrt((P * du).squaredNorm() + (P * dv).squaredNorm());
      };
      break;
    }
    case 4:
      inst.oracle = diff_oracle(dim, M);
      inst.metric = [P = inst.projector](const Point& p) {
        return std::sqrt((P * p.u).squaredNorm() + p.v.squaredNorm());
      };
      break;
  }
  return inst;
}

ProblemInstance make_constrained_toy(RngSeed /*seed*/, bool drop_constraint) {
  ProblemOracle o;
  o.dim_u = o.dim_v = 1;
  o.eval_f = [](const Point& p) { return p.u.squaredNorm() + p.v.squaredNorm(); };
  o.eval_g = [](const Point& p) { return (p.v - p.u).squaredNorm(); };
  o.grad_u_f = [](const Point& p) -> RealVec { return 2.0 * p.u; };
  o.grad_v_f = [](const Point& p) -> RealVec { return 2.0 * p.v; };
  o.grad_v_g = [](const Point& p) -> RealVec { return 2.0 * (p.v - p.u); };
  o.hvp_vv_g = [](const Point&, const RealVec& q) -> RealVec { return 2.0 * q; };
  o.jvp_uv_g = [](const Point&, const RealVec& q) -> RealVec { return -2.0 * q; };
  o.hess_vv_g = [](const Point&) { return RealMat::Constant(1, 1, 2.0); };
  o.jac_uv_g = [](const Point&) { return RealMat::Constant(1, 1, -2.0); };

  ProblemInstance inst;
  inst.box = kSyntheticBox;
  if (drop_constraint) {
    inst.name = "constrained-unconstrained";
    inst.oracle = std::move(o);
    inst.init_sampler = uniform_init(1, 1, kSyntheticBox);
    inst.metric = [](const Point& p) { return std::hypot(p.u[0], p.v[0]); };
    return inst;
  }

  o.dim_c = 1;
  o.constraint_kind = ConstraintKind::kInequality;
  o.eval_h = [](const Point& p) -> RealVec { return RealVec::Constant(1, 1.0 - p.u[0] - p.v[0]); };
  o.jtvp_u_h = [](const Point&, const RealVec& mu) -> RealVec { return -mu; };
  o.jtvp_v_h = [](const Point&, const RealVec& mu) -> RealVec { return -mu; };

  auto base = std::make_shared<const ProblemOracle>(std::move(o));
  inst.name = "constrained";
  inst.unslacked = base;
  inst.oracle = slackify(*base);
  inst.init_sampler = [base, raw = uniform_init(1, 1, kSyntheticBox)](RngSeed seed) {
    return add_slacks(*base, raw(seed));
  };
  inst.metric = [](const Point& p) { return std::hypot(p.u[0] - 0.5, p.v[0] - 0.5); };
  return inst;
}

}  // namespace bilevel
