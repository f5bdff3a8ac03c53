#include "bilevel/logreg.hpp"

#include "bilevel/minimize.hpp"

namespace bilevel::logreg {

RealMat with_bias(const RealMat& X) {
  RealMat out(X.rows(), X.cols() + 1);
  out << X, RealVec::Ones(X.rows());
  return out;
}

double mean_loss(const RealVec& w, const RealMat& Xb, const RealVec& y) {
  const RealVec z = Xb * w;
  double total = 0;
  for (Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - y[i] * z[i];
  return total / static_cast<double>(z.size());
}

RealVec mean_loss_grad(const RealVec& w, const RealMat& Xb, const RealVec& y) {
  const RealVec z = Xb * w;
  RealVec r(z.size());
  for (Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - y[i];
  return Xb.transpose() * r / static_cast<double>(z.size());
}

RealVec train(const RealMat& X, const RealVec& y, const RealVec& weights, double tol) {
  const RealMat Xb = with_bias(X);
  const RealVec c = weights.size() == 0 ? RealVec::Ones(X.rows()) : weights;
  require(c.size() == X.rows(), "logreg::train: weight count mismatch");
  const double total = c.sum();
  require(total > 0, "logreg::train: weights sum to zero");
  ValueGrad fn = [&](const RealVec& w, RealVec& grad) {
    const RealVec z = Xb * w;
    RealVec r(z.size());
    double loss = 0;
    for (Index i = 0; i < z.size(); ++i) {
      loss += c[i] * (softplus(z[i]) - y[i] * z[i]);
      r[i] = c[i] * (sigmoid(z[i]) - y[i]);
    }
    grad = Xb.transpose() * r / total + 2 * kRidge * w;
    return loss / total + kRidge * w.squaredNorm();
  };
  MinimizeOptions opts;
  opts.grad_tol = tol;
  MinimizeResult res = minimize_lbfgs(fn, RealVec::Zero(Xb.cols()), opts);
  return res.x;
}

double accuracy(const RealVec& w, const RealMat& X, const RealVec& y) {
  const RealVec z = with_bias(X) * w;
  Index correct = 0;
  for (Index i = 0; i < z.size(); ++i) correct += ((z[i] > 0 ? 1.0 : 0.0) == y[i]);
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

}  // namespace bilevel::logreg
