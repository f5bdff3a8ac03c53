#pragma once

#include <functional>

#include "bilevel/core.hpp"

namespace bilevel {

// Returns the value at x and writes the gradient into `grad` (already sized).
using ValueGrad = std::function<double(const RealVec& x, RealVec& grad)>;

struct MinimizeOptions {
  double grad_tol = 1e-10;
  int max_iters = 20000;
  int memory = 10;
};

struct MinimizeResult {
  RealVec x;
  double value = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a weak-Wolfe line search that accepts steps on the
/// directional derivative when value differences fall below roundoff, so tight
/// gradient tolerances (1e-10 and below) are reachable.
MinimizeResult minimize_lbfgs(const ValueGrad& fn, RealVec x0, const MinimizeOptions& opts = {});

}  // namespace bilevel
