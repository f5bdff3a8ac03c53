#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "bilevel/errors.hpp"
#include "bilevel/logreg.hpp"
#include "bilevel/problems.hpp"

namespace bilevel {
namespace {

using logreg::kRidge;
using logreg::sigmoid;
using logreg::softplus;

constexpr double kClassOffset = 1.5;
constexpr BoxBounds kFeatureBox{-5.0, 5.0};

// Balanced two-class blobs with means (+-1.5, 0) and identity covariance.
// Label 1 sits at +1.5. Rows alternate classes before the shuffle.
void sample_blobs(Index n, Rng& rng, RealMat& X, RealVec& y) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  X.resize(n, 2);
  y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double label = static_cast<double>(order[static_cast<std::size_t>(i)] % 2);
    y[i] = label;
    X(i, 0) = (label > 0.5 ? kClassOffset : -kClassOffset) + normal(rng);
    X(i, 1) = normal(rng);
  }
}

std::shared_ptr<DatasetSplit> make_blob_split(RngSeed seed, Index n_train, Index n_val,
                                              Index n_test) {
  auto data = std::make_shared<DatasetSplit>();
  Rng rng = make_rng(seed);
  sample_blobs(n_train, rng, data->X_train, data->y_train);
  sample_blobs(n_val, rng, data->X_val, data->y_val);
  sample_blobs(n_test, rng, data->X_test, data->y_test);
  Index next = 0;
  for (auto* ids : {&data->train_ids, &data->val_ids, &data->test_ids}) {
    const Index count = ids == &data->train_ids ? n_train : ids == &data->val_ids ? n_val : n_test;
    for (Index i = 0; i < count; ++i) ids->push_back(next++);
  }
  return data;
}

RealVec residuals(const RealVec& z, const RealVec& y) {
  RealVec r(z.size());
  for (Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - y[i];
  return r;
}

RealVec curvature(const RealVec& z) {
  RealVec s(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double p = sigmoid(z[i]);
    s[i] = p * (1 - p);
  }
  return s;
}

// Upper level shared by the classification toys: sign * mean validation cross-entropy.
void attach_validation_loss(ProblemOracle& o, const RealMat& Xval_b, const RealVec& yval,
                            double sign) {
  o.eval_f = [=](const Point& p) { return sign * logreg::mean_loss(p.v, Xval_b, yval); };
  o.grad_u_f = [nu = o.dim_u](const Point&) -> RealVec { return RealVec::Zero(nu); };
  o.grad_v_f = [=](const Point& p) -> RealVec {
    return sign * logreg::mean_loss_grad(p.v, Xval_b, yval);
  };
}

}  // namespace

// ---------------------------------------------------------------------------
// Ridge

RealVec ridge_solution(const DatasetSplit& data, double u) {
  const double n = static_cast<double>(data.n_train());
  RealMat A = data.X_train.transpose() * data.X_train / n;
  A.diagonal().array() += std::exp(u);
  return A.ldlt().solve(data.X_train.transpose() * data.y_train / n);
}

double ridge_validation_loss(const DatasetSplit& data, double u) {
  const RealVec w = ridge_solution(data, u);
  return (data.X_val * w - data.y_val).squaredNorm() / static_cast<double>(data.n_val());
}

ProblemInstance make_hyperparam_ridge(RngSeed seed, Index n, Index d, double reg_true) {
  require(d >= 1 && n >= d, "make_hyperparam_ridge: need n >= d >= 1");
  require(reg_true > 0, "make_hyperparam_ridge: reg_true must be > 0");
  const Index n_train = std::max<Index>(1, n / 2);
  const Index n_val = std::max<Index>(1, (n - n_train) / 2);
  const Index n_test = n - n_train - n_val;
  require(n_test >= 1, "make_hyperparam_ridge: n too small for a three-way split");

  // Unit noise; prior variance chosen so the MAP regulariser of the
  // normalised lower level equals reg_true.
  const double tau = std::sqrt(1.0 / (static_cast<double>(n_train) * reg_true));
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVec w0(d);
  for (Index j = 0; j < d; ++j) w0[j] = tau * normal(rng);
  RealMat X(n, d);
  RealVec y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) X(i, j) = normal(rng);
  }
  for (Index i = 0; i < n; ++i) y[i] = X.row(i).dot(w0) + normal(rng);

  auto data = std::make_shared<DatasetSplit>();
  data->X_train = X.topRows(n_train);
  data->y_train = y.head(n_train);
  data->X_val = X.middleRows(n_train, n_val);
  data->y_val = y.segment(n_train, n_val);
  data->X_test = X.bottomRows(n_test);
  data->y_test = y.tail(n_test);
  for (Index i = 0; i < n; ++i) {
    (i < n_train ? data->train_ids : i < n_train + n_val ? data->val_ids : data->test_ids)
        .push_back(i);
  }

  const double centre = std::log(reg_true);
  double best_u = centre, best_loss = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kRidgeGridPoints; ++k) {
    const double u = centre - 5.0 + 10.0 * k / (kRidgeGridPoints - 1);
    const double loss = ridge_validation_loss(*data, u);
    if (loss < best_loss) {
      best_loss = loss;
      best_u = u;
    }
  }

  const RealMat XtX = data->X_train.transpose() * data->X_train / static_cast<double>(n_train);
  const RealVec Xty = data->X_train.transpose() * data->y_train / static_cast<double>(n_train);
  const double ytyn = data->y_train.squaredNorm() / static_cast<double>(n_train);

  ProblemOracle o;
  o.dim_u = 1;
  o.dim_v = d;
  o.eval_g = [=](const Point& p) {
    return p.v.dot(XtX * p.v) - 2 * Xty.dot(p.v) + ytyn + std::exp(p.u[0]) * p.v.squaredNorm();
  };
  o.grad_v_g = [=](const Point& p) -> RealVec {
    return 2.0 * (XtX * p.v - Xty) + 2.0 * std::exp(p.u[0]) * p.v;
  };
  o.hvp_vv_g = [=](const Point& p, const RealVec& q) -> RealVec {
    return 2.0 * (XtX * q) + 2.0 * std::exp(p.u[0]) * q;
  };
  o.jvp_uv_g = [](const Point& p, const RealVec& q) -> RealVec {
    return RealVec::Constant(1, 2.0 * std::exp(p.u[0]) * p.v.dot(q));
  };
  o.hess_vv_g = [=](const Point& p) -> RealMat {
    RealMat H = 2.0 * XtX;
    H.diagonal().array() += 2.0 * std::exp(p.u[0]);
    return H;
  };
  o.jac_uv_g = [](const Point& p) -> RealMat {
    return (2.0 * std::exp(p.u[0]) * p.v).transpose();
  };
  const RealMat Xv = data->X_val;
  const RealVec yv = data->y_val;
  const double nv = static_cast<double>(n_val);
  o.eval_f = [=](const Point& p) { return (Xv * p.v - yv).squaredNorm() / nv; };
  o.grad_u_f = [](const Point&) -> RealVec { return RealVec::Zero(1); };
  o.grad_v_f = [=](const Point& p) -> RealVec {
    return 2.0 * Xv.transpose() * (Xv * p.v - yv) / nv;
  };

  ProblemInstance inst;
  inst.name = "ridge";
  inst.oracle = std::move(o);
  inst.data = data;
  inst.u_star = best_u;
  inst.metric = [best_u](const Point& p) { return std::abs(p.u[0] - best_u); };
  inst.init_sampler = [centre, d](RngSeed s) {
    Rng r = make_rng(s);
    return Point{uniform_vector(1, centre - 3.0, centre + 3.0, r), RealVec::Zero(d)};
  };
  return inst;
}

// ---------------------------------------------------------------------------
// Importance weighting

RealVec importance_weights(const RealVec& u) {
  return ((u.array().tanh() + 1.0) * 0.5).matrix();
}

ProblemInstance make_importance_toy(RngSeed seed, Index n_train, Index n_val, double noise_frac,
                                    Index n_test) {
  require(noise_frac >= 0 && noise_frac < 1, "make_importance_toy: noise_frac must be in [0, 1)");
  require(n_train >= 2 && n_val >= 1 && n_test >= 1, "make_importance_toy: split sizes too small");
  auto data = make_blob_split(seed, n_train, n_val, n_test);

  // Flips are taken from class 0 first, so the corrupted training set is
  // biased towards class 1 rather than merely noisier.
  const Index n_flip = static_cast<Index>(std::llround(noise_frac * static_cast<double>(n_train)));
  std::vector<Index> class0, class1;
  for (Index i = 0; i < n_train; ++i) (data->y_train[i] < 0.5 ? class0 : class1).push_back(i);
  Rng rng = make_rng(derive_seed(seed, 11));
  std::shuffle(class0.begin(), class0.end(), rng);
  std::shuffle(class1.begin(), class1.end(), rng);
  class0.insert(class0.end(), class1.begin(), class1.end());
  std::vector<bool> flipped(static_cast<std::size_t>(n_train), false);
  for (Index k = 0; k < n_flip; ++k) {
    const Index i = class0[static_cast<std::size_t>(k)];
    data->y_train[i] = 1.0 - data->y_train[i];
    flipped[static_cast<std::size_t>(i)] = true;
  }

  const RealMat Xb = logreg::with_bias(data->X_train);
  const RealVec y = data->y_train;
  const Index nv = Xb.cols();

  ProblemOracle o;
  o.dim_u = n_train;
  o.dim_v = nv;
  o.eval_g = [=](const Point& p) {
    const RealVec c = importance_weights(p.u);
    const RealVec z = Xb * p.v;
    double loss = 0;
    for (Index i = 0; i < z.size(); ++i) loss += c[i] * (softplus(z[i]) - y[i] * z[i]);
    return loss / c.sum() + kRidge * p.v.squaredNorm();
  };
  o.grad_v_g = [=](const Point& p) -> RealVec {
    const RealVec c = importance_weights(p.u);
    const RealVec r = residuals(Xb * p.v, y);
    return Xb.transpose() * c.cwiseProduct(r) / c.sum() + 2 * kRidge * p.v;
  };
  o.hvp_vv_g = [=](const Point& p, const RealVec& q) -> RealVec {
    const RealVec c = importance_weights(p.u);
    const RealVec s = curvature(Xb * p.v);
    return Xb.transpose() * c.cwiseProduct(s).cwiseProduct(Xb * q) / c.sum() + 2 * kRidge * q;
  };
  // d/du_j of (sum_i c_i r_i x_i^T q / S) = c'_j (r_j x_j^T q - gbar^T q) / S
  o.jvp_uv_g = [=](const Point& p, const RealVec& q) -> RealVec {
    const RealVec c = importance_weights(p.u);
    const RealVec dc = (0.5 * (1.0 - p.u.array().tanh().square())).matrix();
    const double S = c.sum();
    const RealVec a = residuals(Xb * p.v, y).cwiseProduct(Xb * q);
    const double mean = c.dot(a) / S;
    return (dc.array() * (a.array() - mean) / S).matrix();
  };
  o.hess_vv_g = [=](const Point& p) -> RealMat {
    const RealVec c = importance_weights(p.u);
    const RealVec s = curvature(Xb * p.v);
    RealMat H = Xb.transpose() * c.cwiseProduct(s).asDiagonal() * Xb / c.sum();
    H.diagonal().array() += 2 * kRidge;
    return H;
  };
  o.jac_uv_g = [=](const Point& p) -> RealMat {
    const RealVec c = importance_weights(p.u);
    const RealVec dc = (0.5 * (1.0 - p.u.array().tanh().square())).matrix();
    const double S = c.sum();
    const RealVec r = residuals(Xb * p.v, y);
    const RealMat G = r.asDiagonal() * Xb;  // per-example gradients
    const RealVec gbar = G.transpose() * c / S;
    RealMat J = G.rowwise() - gbar.transpose();
    return dc.asDiagonal() * J / S;
  };
  attach_validation_loss(o, logreg::with_bias(data->X_val), data->y_val, 1.0);

  ProblemInstance inst;
  inst.name = "importance";
  inst.oracle = std::move(o);
  inst.data = data;
  inst.flipped = std::move(flipped);
  const RealVec w_uniform = logreg::train(data->X_train, data->y_train);
  inst.init_sampler = [n_train, w_uniform](RngSeed) {
    return Point{RealVec::Zero(n_train), w_uniform};
  };
  return inst;
}

// ---------------------------------------------------------------------------
// Poisoning

void poisoned_training_set(const ProblemInstance& inst, const RealVec& u, RealMat& X,
                           RealVec& y) {
  require(inst.data != nullptr, "poisoned_training_set: instance has no data");
  const Index np = inst.poison_labels.size();
  require(u.size() == 2 * np, "poisoned_training_set: u has the wrong size");
  const Index n = inst.data->n_train();
  X.resize(n + np, 2);
  y.resize(n + np);
  X.topRows(n) = inst.data->X_train;
  y.head(n) = inst.data->y_train;
  for (Index j = 0; j < np; ++j) {
    X(n + j, 0) = u[2 * j];
    X(n + j, 1) = u[2 * j + 1];
  }
  y.tail(np) = inst.poison_labels;
}

ProblemInstance make_poison_toy(RngSeed seed, Index n_train, Index n_val, Index n_poison,
                                Index n_test) {
  require(n_poison >= 1, "make_poison_toy: n_poison must be >= 1");
  require(n_poison <= n_train, "make_poison_toy: n_poison must not exceed n_train");
  require(n_train >= 1 && n_val >= 1 && n_test >= 1, "make_poison_toy: split sizes too small");
  auto data = make_blob_split(seed, n_train, n_val, n_test);

  std::vector<Index> picks(static_cast<std::size_t>(n_train));
  std::iota(picks.begin(), picks.end(), Index{0});
  Rng rng = make_rng(derive_seed(seed, 12));
  std::shuffle(picks.begin(), picks.end(), rng);
  RealVec u0(2 * n_poison), labels(n_poison);
  for (Index j = 0; j < n_poison; ++j) {
    const Index i = picks[static_cast<std::size_t>(j)];
    u0[2 * j] = data->X_train(i, 0);
    u0[2 * j + 1] = data->X_train(i, 1);
    labels[j] = 1.0 - data->y_train[i];
  }

  const RealMat Xb = logreg::with_bias(data->X_train);
  const RealVec y = data->y_train;
  const double total = static_cast<double>(n_train + n_poison);

  // Stacked design matrix of clean rows followed by the poison rows in u.
  auto design = [Xb, n_poison](const RealVec& u) {
    RealMat D(Xb.rows() + n_poison, Xb.cols());
    D.topRows(Xb.rows()) = Xb;
    for (Index j = 0; j < n_poison; ++j)
      D.row(Xb.rows() + j) << u[2 * j], u[2 * j + 1], 1.0;
    return D;
  };
  RealVec y_all(n_train + n_poison);
  y_all << y, labels;

  ProblemOracle o;
  o.dim_u = 2 * n_poison;
  o.dim_v = Xb.cols();
  o.eval_g = [=](const Point& p) {
    const RealVec z = design(p.u) * p.v;
    double loss = 0;
    for (Index i = 0; i < z.size(); ++i) loss += softplus(z[i]) - y_all[i] * z[i];
    return loss / total + kRidge * p.v.squaredNorm();
  };
  o.grad_v_g = [=](const Point& p) -> RealVec {
    const RealMat D = design(p.u);
    return D.transpose() * residuals(D * p.v, y_all) / total + 2 * kRidge * p.v;
  };
  o.hvp_vv_g = [=](const Point& p, const RealVec& q) -> RealVec {
    const RealMat D = design(p.u);
    return D.transpose() * curvature(D * p.v).cwiseProduct(D * q) / total + 2 * kRidge * q;
  };
  o.jvp_uv_g = [=](const Point& p, const RealVec& q) -> RealVec {
    RealVec out(2 * n_poison);
    for (Index j = 0; j < n_poison; ++j) {
      const RealVec x{{p.u[2 * j], p.u[2 * j + 1], 1.0}};
      const double z = x.dot(p.v);
      const double s = sigmoid(z);
      const double r = s - labels[j];
      for (Index a = 0; a < 2; ++a)
        out[2 * j + a] = (s * (1 - s) * p.v[a] * x.dot(q) + r * q[a]) / total;
    }
    return out;
  };
  o.hess_vv_g = [=](const Point& p) -> RealMat {
    const RealMat D = design(p.u);
    RealMat H = D.transpose() * curvature(D * p.v).asDiagonal() * D / total;
    H.diagonal().array() += 2 * kRidge;
    return H;
  };
  o.jac_uv_g = [=](const Point& p) -> RealMat {
    RealMat J = RealMat::Zero(2 * n_poison, p.v.size());
    for (Index j = 0; j < n_poison; ++j) {
      const RealVec x{{p.u[2 * j], p.u[2 * j + 1], 1.0}};
      const double s = sigmoid(x.dot(p.v));
      for (Index a = 0; a < 2; ++a) {
        J.row(2 * j + a) = s * (1 - s) * p.v[a] * x.transpose();
        J(2 * j + a, a) += s - labels[j];
      }
    }
    return J / total;
  };
  attach_validation_loss(o, logreg::with_bias(data->X_val), data->y_val, -1.0);

  ProblemInstance inst;
  inst.name = "poison";
  inst.oracle = std::move(o);
  inst.data = data;
  inst.poison_labels = labels;
  inst.box = kFeatureBox;

  RealMat X0;
  RealVec y0;
  poisoned_training_set(inst, u0, X0, y0);
  const RealVec w0 = logreg::train(X0, y0);
  // The label-flip baseline is the starting point; the seed does not move it.
  inst.init_sampler = [u0, w0](RngSeed) { return Point{u0, w0}; };
  return inst;
}

ImportanceReport evaluate_importance(const ProblemInstance& inst, const RealVec& u) {
  require(inst.data && inst.flipped.size() == static_cast<std::size_t>(inst.data->n_train()),
          "evaluate_importance: not an importance instance");
  const DatasetSplit& d = *inst.data;
  const RealVec c = importance_weights(u.head(d.n_train()));
  ImportanceReport r;
  double clean = 0, flipped = 0;
  Index n_flipped = 0;
  for (Index i = 0; i < d.n_train(); ++i) {
    if (inst.flipped[i]) {
      flipped += c[i];
      ++n_flipped;
    } else {
      clean += c[i];
    }
  }
  const Index n_clean = d.n_train() - n_flipped;
  r.clean_mean = n_clean > 0 ? clean / n_clean : 0.0;
  r.flipped_mean = n_flipped > 0 ? flipped / n_flipped : 0.0;

  r.weighted_accuracy = logreg::accuracy(logreg::train(d.X_train, d.y_train, c), d.X_test, d.y_test);
  RealMat X(d.n_train() + d.n_val(), d.X_train.cols());
  X << d.X_train, d.X_val;
  RealVec y(X.rows());
  y << d.y_train, d.y_val;
  r.train_val_accuracy = logreg::accuracy(logreg::train(X, y), d.X_test, d.y_test);
  return r;
}

PoisonReport evaluate_poison(const ProblemInstance& inst, const RealVec& u) {
  require(inst.data && inst.poison_labels.size() > 0, "evaluate_poison: not a poison instance");
  const DatasetSplit& d = *inst.data;
  RealMat X;
  RealVec y;
  PoisonReport r;
  poisoned_training_set(inst, u, X, y);
  r.poisoned_accuracy = logreg::accuracy(logreg::train(X, y), d.X_test, d.y_test);
  poisoned_training_set(inst, inst.init_sampler(RngSeed{0}).u, X, y);
  r.label_flip_accuracy = logreg::accuracy(logreg::train(X, y), d.X_test, d.y_test);
  r.clean_accuracy = logreg::accuracy(logreg::train(d.X_train, d.y_train), d.X_test, d.y_test);
  return r;
}

void write_split_csv(const std::string& path, const RealMat& X, const RealVec& y,
                     const std::vector<bool>* flipped) {
  require(X.cols() == 2 && X.rows() == y.size(), "write_split_csv: expected n x 2 features");
  if (flipped) require(static_cast<Index>(flipped->size()) == y.size(),
                       "write_split_csv: flip mask size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_split_csv: cannot open " + path);
  out << "x1,x2,label" << (flipped ? ",flipped" : "") << '\n';
  out << std::setprecision(17);
  for (Index i = 0; i < X.rows(); ++i) {
    out << X(i, 0) << ',' << X(i, 1) << ',' << static_cast<int>(y[i]);
    if (flipped) out << ',' << ((*flipped)[static_cast<std::size_t>(i)] ? 1 : 0);
    out << '\n';
  }
}

}  // namespace bilevel
