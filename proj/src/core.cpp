#include "bilevel/core.hpp"

namespace bilevel {

std::string to_string(StepperKind kind) {
  return kind == StepperKind::kAdam ? "adam" : "plain-gd";
}

StepperKind stepper_from_string(const std::string& name) {
  if (name == "adam") return StepperKind::kAdam;
  if (name == "plain-gd" || name == "gd" || name == "sgd") return StepperKind::kPlainGd;
  throw ContractViolation("unknown stepper '" + name + "'");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngSeed derive_seed(RngSeed base, std::uint64_t stream) {
  return RngSeed{mix_seed(base.seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL))};
}

RealMat gaussian_matrix(Index rows, Index cols, RngSeed seed) {
  require(rows >= 1 && cols >= 1, "gaussian_matrix: rows and cols must be >= 1");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMat out(rows, cols);
  // Fill row-major so the stream order does not depend on Eigen's storage order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out(r, c) = normal(rng);
  return out;
}

RealVec uniform_vector(Index n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  RealVec out(n);
  for (Index i = 0; i < n; ++i) out[i] = dist(rng);
  return out;
}

}  // namespace bilevel
