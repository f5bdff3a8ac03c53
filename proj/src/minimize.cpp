#include "bilevel/minimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace bilevel {
namespace {

struct LineSearchResult {
  bool ok = false;
  double alpha = 0;
  double value = 0;
};

LineSearchResult weak_wolfe(const ValueGrad& fn, const RealVec& x, const RealVec& dir, double f0,
                            double slope0, double alpha0, RealVec& x_new, RealVec& g_new) {
  constexpr double kC1 = 1e-4;
  constexpr double kC2 = 0.9;
  const double roundoff = 1e-13 * (1.0 + std::abs(f0));
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double slope_lo = slope0, slope_hi = 0.0;
  double alpha = alpha0;
  for (int it = 0; it < 80; ++it) {
    x_new = x + alpha * dir;
    const double f = fn(x_new, g_new);
    const double slope = g_new.dot(dir);
    if (!std::isfinite(f) || f > f0 + kC1 * alpha * slope0 + roundoff) {
      hi = alpha;
      slope_hi = std::isfinite(slope) ? slope : 0.0;
    } else if (slope < kC2 * slope0) {
      lo = alpha;
      slope_lo = slope;
    } else {
      return {true, alpha, f};
    }
    if (std::isinf(hi)) {
      alpha *= 2.0;
    } else {
      // Secant on the directional derivative, clamped inside the bracket.
      double next = 0.5 * (lo + hi);
      if (slope_hi > 0 && slope_lo < 0) next = lo - slope_lo * (hi - lo) / (slope_hi - slope_lo);
      const double width = hi - lo;
      alpha = std::clamp(next, lo + 0.1 * width, hi - 0.1 * width);
      if (width < 1e-20 * std::max(1.0, hi)) break;
    }
  }
  return {};
}

}  // namespace

MinimizeResult minimize_lbfgs(const ValueGrad& fn, RealVec x0, const MinimizeOptions& opts) {
  MinimizeResult res;
  const Index n = x0.size();
  RealVec x = std::move(x0);
  RealVec g(n), x_new(n), g_new(n);
  double f = fn(x, g);
  if (!std::isfinite(f) || !g.allFinite()) throw NumericError("minimize_lbfgs: non-finite start");

  std::deque<RealVec> s_hist, y_hist;
  std::deque<double> rho_hist;
  int failures = 0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    if (g.norm() <= opts.grad_tol) break;

    // Two-loop recursion.
    RealVec dir = -g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(dir);
      dir -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(dir);
      dir += (a[i] - b) * s_hist[i];
    }
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear(), y_hist.clear(), rho_hist.clear();
    }
    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    auto ls = weak_wolfe(fn, x, dir, f, slope, alpha0, x_new, g_new);
    if (!ls.ok) {
      if (++failures > 2 || s_hist.empty()) break;
      s_hist.clear(), y_hist.clear(), rho_hist.clear();
      continue;
    }
    failures = 0;
    RealVec s = x_new - x;
    RealVec y = g_new - g;
    const double sy = s.dot(y);
    x.swap(x_new);
    g.swap(g_new);
    f = ls.value;
    if (sy > 1e-300) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front(), y_hist.pop_front(), rho_hist.pop_front();
      }
    }
  }
  res.grad_norm = g.norm();
  res.converged = res.grad_norm <= opts.grad_tol;
  res.iterations = it;
  res.value = f;
  res.x = std::move(x);
  return res;
}

}  // namespace bilevel
