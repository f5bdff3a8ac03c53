#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "bilevel/errors.hpp"

namespace bilevel {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using RealVec = Vec<double>;
using RealMat = Mat<double>;
using Index = Eigen::Index;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  // x * 0 is 0 for finite entries and NaN otherwise; one vectorised reduction.
  return (x.derived().array() * typename Derived::Scalar(0)).sum() == typename Derived::Scalar(0);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}
// Literal messages stay unallocated on the hot path.
inline void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

enum class StepperKind { kPlainGd, kAdam };

std::string to_string(StepperKind kind);
StepperKind stepper_from_string(const std::string& name);

/// Per-parameter optimizer memory. For plain GD only `kind` and `steps` are used.
template <typename Scalar>
struct StepperState {
  StepperKind kind = StepperKind::kAdam;
  Vec<Scalar> first_moment;
  Vec<Scalar> second_moment;
  std::int64_t steps = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps_hat = Scalar(1e-8);
  Scalar beta1_power = Scalar(1);  // beta1^steps, kept incrementally
  Scalar beta2_power = Scalar(1);

  StepperState() = default;
  StepperState(StepperKind k, Index dim) : kind(k) { reset(dim); }

  void reset(Index dim) {
    first_moment = Vec<Scalar>::Zero(dim);
    second_moment = Vec<Scalar>::Zero(dim);
    steps = 0;
    beta1_power = beta2_power = Scalar(1);
  }
};

namespace detail {
template <typename A, typename B>
void check_step_args(const Eigen::MatrixBase<A>& params, const Eigen::MatrixBase<B>& grad,
                     double lr) {
  require(params.size() == grad.size(), "stepper: params/grad dimension mismatch");
  require(lr > 0, "stepper: learning rate must be positive");
  if (!all_finite(grad)) throw NumericError("stepper: non-finite gradient");
}
}  // namespace detail

template <typename Derived, typename GradDerived>
Vec<typename Derived::Scalar> sgd_step(const Eigen::MatrixBase<Derived>& params,
                                       const Eigen::MatrixBase<GradDerived>& grad,
                                       typename Derived::Scalar lr) {
  detail::check_step_args(params, grad, static_cast<double>(lr));
  return params - lr * grad;
}

/// Adam with bias correction, updating `params` in place. Advances `state` by one step.
template <typename Scalar, typename GradDerived>
void adam_update(StepperState<Scalar>& state, Vec<Scalar>& params,
                 const Eigen::MatrixBase<GradDerived>& grad, Scalar lr) {
  detail::check_step_args(params, grad, static_cast<double>(lr));
  require(state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          "adam_step: moment dimension mismatch");
  ++state.steps;
  state.first_moment = state.beta1 * state.first_moment + (Scalar(1) - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (Scalar(1) - state.beta2) * grad.cwiseAbs2();
  state.beta1_power *= state.beta1;
  state.beta2_power *= state.beta2;
  const Scalar c1 = Scalar(1) - state.beta1_power;
  const Scalar c2 = Scalar(1) - state.beta2_power;
  const Scalar inv_sqrt_c2 = Scalar(1) / std::sqrt(c2);
  params.array() -= (lr / c1) * state.first_moment.array() /
                    (state.second_moment.array().sqrt() * inv_sqrt_c2 + state.eps_hat);
}

template <typename Scalar, typename Derived, typename GradDerived>
Vec<Scalar> adam_step(StepperState<Scalar>& state, const Eigen::MatrixBase<Derived>& params,
                      const Eigen::MatrixBase<GradDerived>& grad, Scalar lr) {
  Vec<Scalar> out = params;
  adam_update(state, out, grad, lr);
  return out;
}

/// In-place step dispatching on the state's kind; plain GD still counts steps.
template <typename Scalar, typename GradDerived>
void step_in_place(StepperState<Scalar>& state, Vec<Scalar>& params,
                   const Eigen::MatrixBase<GradDerived>& grad, Scalar lr) {
  if (state.kind == StepperKind::kAdam) return adam_update(state, params, grad, lr);
  detail::check_step_args(params, grad, static_cast<double>(lr));
  ++state.steps;
  params -= lr * grad;
}

template <typename Scalar, typename Derived, typename GradDerived>
Vec<Scalar> step(StepperState<Scalar>& state, const Eigen::MatrixBase<Derived>& params,
                 const Eigen::MatrixBase<GradDerived>& grad, Scalar lr) {
  Vec<Scalar> out = params;
  step_in_place(state, out, grad, lr);
  return out;
}

struct BoxBounds {
  double lo = -5.0;
  double hi = 5.0;
};

template <typename Derived>
Vec<typename Derived::Scalar> project_box(const Eigen::MatrixBase<Derived>& params,
                                          const BoxBounds& box) {
  using Scalar = typename Derived::Scalar;
  require(box.lo < box.hi, "project_box: lo must be < hi");
  return params.cwiseMax(Scalar(box.lo)).cwiseMin(Scalar(box.hi));
}

template <typename Scalar>
void clamp_to_box(Vec<Scalar>& params, const BoxBounds& box) {
  require(box.lo < box.hi, "project_box: lo must be < hi");
  params = params.cwiseMax(Scalar(box.lo)).cwiseMin(Scalar(box.hi));
}

struct RngSeed {
  std::uint64_t seed = 0;
};

/// SplitMix64 finalizer; used to derive independent per-trial and per-purpose seeds.
std::uint64_t mix_seed(std::uint64_t x);
RngSeed derive_seed(RngSeed base, std::uint64_t stream);

using Rng = std::mt19937_64;
inline Rng make_rng(RngSeed seed) { return Rng(mix_seed(seed.seed)); }

RealMat gaussian_matrix(Index rows, Index cols, RngSeed seed);
RealVec uniform_vector(Index n, double lo, double hi, Rng& rng);

}  // namespace bilevel
