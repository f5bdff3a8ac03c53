#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>

#include "bilevel/core.hpp"

namespace bilevel {

/// (u, v): upper-level and lower-level variables.
struct Point {
  RealVec u;
  RealVec v;
};

enum class ConstraintKind { kEquality, kInequality };

/// Callback bundle describing a bilevel problem
///   min_u f(u, v*)  s.t.  h(u, v*) (= or <=) 0,  v* = argmin_v g(u, v).
/// Second-order blocks are exposed as products; the dense matrices are optional.
/// Callbacks must be reentrant.
struct ProblemOracle {
  Index dim_u = 0;
  Index dim_v = 0;
  Index dim_c = 0;
  ConstraintKind constraint_kind = ConstraintKind::kEquality;

  std::function<double(const Point&)> eval_f;
  std::function<double(const Point&)> eval_g;
  std::function<RealVec(const Point&)> grad_u_f;
  std::function<RealVec(const Point&)> grad_v_f;
  std::function<RealVec(const Point&)> grad_v_g;
  // d2g/dv2 * q  (V -> V)
  std::function<RealVec(const Point&, const RealVec&)> hvp_vv_g;
  // d2g/(du dv) * q  (V -> U)
  std::function<RealVec(const Point&, const RealVec&)> jvp_uv_g;

  std::function<RealVec(const Point&)> eval_h;
  // (dh/du)^T mu and (dh/dv)^T mu  (C -> U, C -> V)
  std::function<RealVec(const Point&, const RealVec&)> jtvp_u_h;
  std::function<RealVec(const Point&, const RealVec&)> jtvp_v_h;

  std::function<RealMat(const Point&)> hess_vv_g;  // V x V
  std::function<RealMat(const Point&)> jac_uv_g;   // U x V

  bool has_constraints() const { return dim_c > 0; }
  bool has_dense() const { return static_cast<bool>(hess_vv_g) && static_cast<bool>(jac_uv_g); }
  void check_point(const Point& p) const;
};

/// Oracle-call tallies for one run. Peak storage counts V-sized vectors held
/// simultaneously by a hypergradient routine (a U x V matrix counts as U vectors).
struct OracleCounters {
  std::int64_t n_f = 0;
  std::int64_t n_g = 0;
  std::int64_t n_grad_u_f = 0;
  std::int64_t n_grad_v_f = 0;
  std::int64_t n_grad_v_g = 0;
  std::int64_t n_hvp = 0;
  std::int64_t n_jvp = 0;
  std::int64_t n_dense_hess = 0;
  std::int64_t n_dense_jac = 0;
  std::int64_t peak_stored_vecs = 0;

  void note_storage(std::int64_t vecs) { peak_stored_vecs = std::max(peak_stored_vecs, vecs); }
  std::int64_t second_order() const { return n_hvp + n_jvp; }
};

/// Thin forwarding layer that tallies calls into `counters` (when non-null) and
/// rejects non-finite results, naming the callback that produced them.
class CountedOracle {
 public:
  explicit CountedOracle(const ProblemOracle& oracle, OracleCounters* counters = nullptr)
      : o_(oracle), c_(counters) {}

  const ProblemOracle& raw() const { return o_; }
  OracleCounters* counters() const { return c_; }

  double f(const Point& p) const;
  double g(const Point& p) const;
  RealVec grad_u_f(const Point& p) const;
  RealVec grad_v_f(const Point& p) const;
  RealVec grad_v_g(const Point& p) const;
  RealVec hvp(const Point& p, const RealVec& q) const;
  RealVec jvp(const Point& p, const RealVec& q) const;
  RealVec h(const Point& p) const;
  RealVec jtvp_u_h(const Point& p, const RealVec& mu) const;
  RealVec jtvp_v_h(const Point& p, const RealVec& mu) const;
  RealMat hess_vv_g(const Point& p) const;
  RealMat jac_uv_g(const Point& p) const;

 private:
  const ProblemOracle& o_;
  OracleCounters* c_;
};

struct PenaltyParams {
  double gamma = 1.0;
  double lambda = 0.0;
  RealVec nu;    // size V, or empty for zero
  RealVec nu_h;  // size C, or empty for zero
};

/// f + gamma/2 (|h|^2 + |grad_v g|^2) + nu^T grad_v g + nu_h^T h + lambda g.
/// With lambda = 0 this is the function whose u-gradient penalty_grad_u returns;
/// penalty_grad_v is its exact v-gradient including the lambda term.
double penalty_value(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                     OracleCounters* counters = nullptr);

/// grad_v f + gamma (Jv_h^T h + H (grad_v g)) + H nu + Jv_h^T nu_h + lambda grad_v g,
/// with one Hessian-vector product.
RealVec penalty_grad_v(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                       OracleCounters* counters = nullptr);

RealVec penalty_grad_v(const CountedOracle& oracle, const Point& p, const PenaltyParams& params);

/// grad_u f + gamma (Ju_h^T h + J (grad_v g)) + J nu + Ju_h^T nu_h, with one
/// Jacobian-vector product. No lambda term.
RealVec penalty_grad_u(const ProblemOracle& oracle, const Point& p, const PenaltyParams& params,
                       OracleCounters* counters = nullptr);

/// Same as penalty_grad_u but reuses an already evaluated grad_v g (saves one call).
RealVec penalty_grad_u(const CountedOracle& oracle, const Point& p, const PenaltyParams& params,
                       const RealVec& grad_v_g);

/// Converts inequality constraints h <= 0 into h + s^2 = 0 with slacks s appended to u.
ProblemOracle slackify(const ProblemOracle& oracle);

/// Lifts a point of the original oracle to the slackified one:
/// s_i = sqrt(max(-h_i(p), eps_slack)).
Point add_slacks(const ProblemOracle& original, const Point& p, double eps_slack = 1e-3);

struct FdReport {
  double grad_u_f = 0;
  double grad_v_f = 0;
  double grad_v_g = 0;
  double hvp = 0;
  double jvp = 0;
  double jtvp_h = 0;     // 0 when unconstrained
  double dense = 0;      // dense blocks vs. products, 0 when absent
  double max() const;
  std::string describe() const;
};

/// Central-difference self-check of every analytic callback at p.
FdReport fd_check_oracle(const ProblemOracle& oracle, const Point& p, double eps = 1e-5,
                         RngSeed seed = {7});

double relative_error(const RealVec& approx, const RealVec& exact);

}  // namespace bilevel
