#pragma once

#include <chrono>
#include <cmath>

#include "bilevel/solvers.hpp"

namespace bilevel::detail {

// Builds the trace. Diagnostics go through the raw oracle so they neither touch
// the counters nor count toward the measured wall time.
class Recorder {
 public:
  Recorder(const ProblemOracle& oracle, const PenaltyConfig& cfg, const RunHooks& hooks,
           const OracleCounters& counters)
      : oracle_(oracle), cfg_(cfg), hooks_(hooks), counters_(counters) {
    since_ = Clock::now();
  }

  bool due(std::int64_t k) const { return k % cfg_.record_every == 0 || k == cfg_.K; }

  void record(std::int64_t k, const Point& p, double gamma, double eps, double lambda,
              double grad_u_norm, double grad_v_norm) {
    pause();
    TraceRecord r;
    r.k = k;
    r.gamma = gamma;
    r.eps = eps;
    r.lambda = lambda;
    r.f = oracle_.eval_f(p);
    r.g = oracle_.eval_g(p);
    r.grad_u_norm = grad_u_norm;
    r.grad_v_norm = grad_v_norm;
    const RealVec gv = oracle_.grad_v_g(p);
    r.grad_v_g_norm = gv.norm();
    double feas2 = gv.squaredNorm();
    if (oracle_.has_constraints() && oracle_.eval_h) feas2 += oracle_.eval_h(p).squaredNorm();
    r.feas_norm = std::sqrt(feas2);
    if (hooks_.metric) r.distance = hooks_.metric(p);
    r.wall_seconds = elapsed();
    r.counters = counters_;
    if (!std::isfinite(r.f) || !std::isfinite(r.g) || !std::isfinite(r.feas_norm))
      throw NumericError("non-finite cost at recorded iterate");
    trace.records.push_back(r);
    resume();
  }

  double elapsed() const {
    auto total = active_;
    if (running_) total += Clock::now() - since_;
    return std::chrono::duration<double>(total).count();
  }

  SolverTrace trace;

 private:
  using Clock = std::chrono::steady_clock;

  void pause() {
    active_ += Clock::now() - since_;
    running_ = false;
  }
  void resume() {
    since_ = Clock::now();
    running_ = true;
  }

  const ProblemOracle& oracle_;
  const PenaltyConfig& cfg_;
  const RunHooks& hooks_;
  const OracleCounters& counters_;
  Clock::time_point since_;
  Clock::duration active_{0};
  bool running_ = true;
};

}  // namespace bilevel::detail
