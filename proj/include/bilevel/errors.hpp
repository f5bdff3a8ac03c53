#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

// Caller broke a documented precondition (dimension mismatch, T = 0, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or Inf showed up in a cost, gradient or iterate.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The oracle lacks an optional callback the operation needs (dense blocks, constraints).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bilevel
