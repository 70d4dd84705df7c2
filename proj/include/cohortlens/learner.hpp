#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace cohortlens {

enum class Family { Logistic, Forest };
enum class Penalty { L1, L2 };

std::string_view to_string(Family f);  // "logistic", "forest"
Family parse_family(std::string_view s);

/// One logistic regression hyperparameter point. C is the inverse regularization strength.
struct LogisticPoint {
  Penalty penalty = Penalty::L2;
  double C = 1.0;
  double tolerance = 1e-4;
  bool operator==(const LogisticPoint&) const = default;
};

/// One random forest hyperparameter point; max_depth 0 means unlimited.
struct ForestPoint {
  int max_depth = 0;
  int n_trees = 100;
  bool operator==(const ForestPoint&) const = default;
};

using HyperPoint = std::variant<LogisticPoint, ForestPoint>;

std::string describe(const HyperPoint& p);

struct ModelSpec {
  Family family = Family::Logistic;
  std::vector<HyperPoint> grid;
  std::uint64_t seed = 0;

  /// penalty {L1, L2} x C {0.01, 0.1, 1, 10, 100} x tolerance {1e-4, 1e-3}, in that nesting order.
  static ModelSpec logistic(std::uint64_t seed);
  /// max_depth {2, 4, 6, 8, unlimited}.
  static ModelSpec forest(std::uint64_t seed, int n_trees = 100);
};

/// Per-feature z-scoring; zero-variance features map to 0.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  int label = 0;     // leaf vote
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  int depth() const;
  bool operator==(const Tree&) const = default;
};

class TrainedModel {
 public:
  Family family = Family::Logistic;
  HyperPoint point;
  std::vector<std::string> feature_names;
  Standardizer scaler;
  Eigen::VectorXd weights;  // logistic, in standardized units
  double intercept = 0;
  std::vector<Tree> trees;  // forest
  std::uint64_t seed = 0;

  /// Requires `names` to equal `feature_names` exactly; throws ContractError listing the
  /// differing columns otherwise.
  Eigen::VectorXi predict(const Eigen::MatrixXd& x, const std::vector<std::string>& names) const;
  Eigen::VectorXi predict(const Eigen::MatrixXd& x) const;
  /// Logistic probability of class 1 (forest: fraction of trees voting 1).
  Eigen::VectorXd score(const Eigen::MatrixXd& x) const;
};

std::string model_to_json(const TrainedModel& m);
TrainedModel model_from_json(std::string_view text);

// ---------------------------------------------------------------- training

/// Fold index (0..k-1) per sample. Classes are shuffled independently and dealt round-robin,
/// continuing the deal across classes, so fold sizes differ by at most one.
std::vector<int> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Regularized objective minimized by `train_logistic` on already-standardized inputs:
/// C * sum_i log(1 + exp(-s_i (x_i . w + b))) + penalty(w), s_i = 2 y_i - 1,
/// penalty = 0.5 |w|^2 (L2) or |w|_1 (L1). The intercept is not penalized.
double logistic_objective(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const Eigen::VectorXd& w,
                          double b, const LogisticPoint& point);
/// Gradient of the smooth part plus the L2 term (L1 contributes sign(w)). Last entry: d/db.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const Eigen::VectorXd& w,
                                  double b, const LogisticPoint& point);

struct LogisticFit {
  Eigen::VectorXd w;
  double b = 0;
  int iterations = 0;
  bool converged = false;
};

/// Accelerated proximal gradient with backtracking line search on standardized inputs.
LogisticFit fit_logistic(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const LogisticPoint& point,
                         int max_iter = 10000);

TrainedModel train_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const LogisticPoint& point,
                            std::vector<std::string> names = {});
TrainedModel train_forest(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const ForestPoint& point,
                          std::uint64_t seed, std::vector<std::string> names = {});
TrainedModel train(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const HyperPoint& point,
                   std::uint64_t seed, std::vector<std::string> names = {});

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred, int positive = 1);
double f1_score(const Confusion& c);
double f1_score(std::span<const int> y_true, std::span<const int> y_pred, int positive = 1);

struct GridResult {
  HyperPoint best;
  double mean_f1 = 0;
  std::vector<double> point_f1;  // per grid point, grid order; NaN when the point failed
  TrainedModel model;            // refit on all data at `best`
};

/// Stratified k-fold CV of every grid point; picks the highest mean F1 (first on ties) and refits.
/// `jobs` <= 0 uses all cores; results do not depend on it.
GridResult grid_search_cv(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const ModelSpec& spec, int k,
                          std::uint64_t seed, const std::vector<std::string>& names = {}, int jobs = 1);

struct Downsample {
  std::vector<Eigen::Index> rows;  // selected row indices, ascending
  Eigen::MatrixXd x;
  Eigen::VectorXi y;
  std::size_t minority = 0;
  std::size_t majority = 0;
};

/// Keeps every minority row and `ratio * |minority|` majority rows drawn without replacement.
Downsample downsample_majority(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double ratio,
                               std::uint64_t seed);

/// Rows of `x` at `idx`.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const Eigen::Index> idx);
Eigen::VectorXi take_rows(const Eigen::VectorXi& y, std::span<const Eigen::Index> idx);

}  // namespace cohortlens
