#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/oracle.hpp"

namespace bilevel {

/// Two-feature binary classification data. Rows of X are samples; the *_ids
/// vectors record which draws of the shared sample pool went to each split.
struct DatasetSplit {
  RealMat X_train, X_val, X_test;
  RealVec y_train, y_val, y_test;
  std::vector<Index> train_ids, val_ids, test_ids;

  Index n_train() const { return X_train.rows(); }
  Index n_val() const { return X_val.rows(); }
  Index n_test() const { return X_test.rows(); }
};

struct ProblemInstance {
  std::string name;
  ProblemOracle oracle;
  std::function<double(const Point&)> metric;  // empty when no solution is known
  std::function<Point(RngSeed)> init_sampler;
  std::optional<BoxBounds> box;

  // Problem-specific extras (empty unless the factory fills them).
  std::shared_ptr<const DatasetSplit> data;
  std::vector<bool> flipped;  // importance toy: training labels that were flipped
  RealVec poison_labels;      // poison toy: fixed labels of the poison points
  RealMat A;                  // examples 3-4
  RealMat projector;          // examples 3-4: A^T (A A^T)^{-1} A
  double u_star = 0;          // ridge: grid optimum of the log-regulariser
  std::shared_ptr<const ProblemOracle> unslacked;  // constrained toy: inequality form
};

/// Examples 1-4 on a box [-5, 5]. Ids 3 and 4 need an even `dim` (A is dim/2 x dim).
ProblemInstance make_synthetic(int id, Index dim, RngSeed seed);

/// f = u^2 + v^2, g = (v - u)^2, h = 1 - u - v <= 0, already slackified
/// (upper variable is (u, s)). With `drop_constraint` h is omitted.
ProblemInstance make_constrained_toy(RngSeed seed, bool drop_constraint = false);

/// Ridge regression with u = log regulariser:
///   g = |X_tr w - y_tr|^2 / N_tr + e^u |w|^2,   f = |X_val w - y_val|^2 / N_val.
/// Targets come from a Gaussian prior whose Bayes-optimal regulariser is `reg_true`.
ProblemInstance make_hyperparam_ridge(RngSeed seed, Index n, Index d, double reg_true);

/// Closed-form ridge weights (X^T X / N + e^u I)^{-1} X^T y / N on the training split.
RealVec ridge_solution(const DatasetSplit& data, double u);
double ridge_validation_loss(const DatasetSplit& data, double u);
inline constexpr int kRidgeGridPoints = 1000;

/// Per-example importance weights u' = (tanh u + 1) / 2 on a weighted, ridge
/// regularised logistic regression; upper level is clean validation loss.
ProblemInstance make_importance_toy(RngSeed seed, Index n_train, Index n_val, double noise_frac,
                                    Index n_test = 1000);
RealVec importance_weights(const RealVec& u);

/// Untargeted poisoning: u holds n_poison feature rows (row-major) with fixed
/// flipped labels; upper level maximises the clean validation loss.
ProblemInstance make_poison_toy(RngSeed seed, Index n_train, Index n_val, Index n_poison,
                                Index n_test = 1000);
/// Clean training set plus the poison rows encoded in u.
void poisoned_training_set(const ProblemInstance& inst, const RealVec& u, RealMat& X,
                           RealVec& y);

/// Strongly convex quadratic lower level (Hessian spectrum in [1, 4]) with a
/// smooth non-quadratic upper level; used for cross-checking hypergradients.
ProblemInstance make_random_quadratic(RngSeed seed, Index dim_u, Index dim_v);

struct ImportanceReport {
  double clean_mean = 0;          // mean u' over clean training points
  double flipped_mean = 0;        // mean u' over flipped ones
  double weighted_accuracy = 0;   // test accuracy retrained on u'-weighted training data
  double train_val_accuracy = 0;  // test accuracy trained on train + val, unweighted
  double gap() const { return clean_mean - flipped_mean; }
};
ImportanceReport evaluate_importance(const ProblemInstance& inst, const RealVec& u);

struct PoisonReport {
  double poisoned_accuracy = 0;    // retrained on train + poisons from u
  double label_flip_accuracy = 0;  // retrained on train + the unoptimised flipped points
  double clean_accuracy = 0;
};
PoisonReport evaluate_poison(const ProblemInstance& inst, const RealVec& u);

/// Writes x1,x2,label[,flipped] rows for one split.
void write_split_csv(const std::string& path, const RealMat& X, const RealVec& y,
                     const std::vector<bool>* flipped = nullptr);

/// Name-based construction used by the CLI. Unset fields take per-problem defaults.
struct ProblemParams {
  std::string name = "example1";
  Index dim = 10;
  Index n = 80;          // ridge samples
  Index d = 30;          // ridge features
  double reg_true = 0.5;
  Index n_train = 200;
  Index n_val = 40;
  Index n_test = 1000;
  Index n_poison = 10;
  double noise_frac = 0.25;
  Index dim_u = 5;
  Index dim_v = 5;
};

ProblemInstance make_problem(const ProblemParams& params, RngSeed seed);
const std::vector<std::string>& problem_names();

}  // namespace bilevel
