#include "cohortlens/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cohortlens/error.hpp"
#include "cohortlens/parallel.hpp"

namespace cohortlens {

std::string_view to_string(Family f) { return f == Family::Logistic ? "logistic" : "forest"; }

Family parse_family(std::string_view s) {
  if (s == "logistic") return Family::Logistic;
  if (s == "forest") return Family::Forest;
  throw ConfigError("unknown model family '" + std::string(s) + "' (expected logistic or forest)");
}

std::string describe(const HyperPoint& p) {
  std::ostringstream out;
  if (const auto* l = std::get_if<LogisticPoint>(&p)) {
    out << "logistic(penalty=" << (l->penalty == Penalty::L1 ? "l1" : "l2") << ",C=" << l->C
        << ",tol=" << l->tolerance << ")";
  } else {
    const auto& f = std::get<ForestPoint>(p);
    out << "forest(max_depth=";
    if (f.max_depth > 0)
      out << f.max_depth;
    else
      out << "unlimited";
    out << ",n_trees=" << f.n_trees << ")";
  }
  return out.str();
}

ModelSpec ModelSpec::logistic(std::uint64_t seed) {
  ModelSpec s{Family::Logistic, {}, seed};
  for (Penalty p : {Penalty::L1, Penalty::L2})
    for (double c : {0.01, 0.1, 1.0, 10.0, 100.0})
      for (double tol : {1e-4, 1e-3}) s.grid.emplace_back(LogisticPoint{p, c, tol});
  return s;
}

ModelSpec ModelSpec::forest(std::uint64_t seed, int n_trees) {
  ModelSpec s{Family::Forest, {}, seed};
  for (int d : {2, 4, 6, 8, 0}) s.grid.emplace_back(ForestPoint{d, n_trees});
  return s;
}

// ---------------------------------------------------------------- standardization

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.sd.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
    s.sd[j] = std::sqrt(var);
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw ContractError("standardizer: column count mismatch");
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (sd[j] > 0)
      z.col(j) = (x.col(j).array() - mean[j]) / sd[j];
    else
      z.col(j).setZero();
  }
  return z;
}

// ---------------------------------------------------------------- folds & metrics

std::vector<int> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ContractError("stratified_kfold: k must be at least 2");
  std::set<int> classes(labels.begin(), labels.end());
  std::vector<int> folds(labels.size(), -1);
  std::mt19937_64 rng(seed);
  std::size_t deal = 0;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    if (members.size() < static_cast<std::size_t>(k))
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " members, fewer than k = " + std::to_string(k));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) folds[i] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return folds;
}

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred, int positive) {
  if (y_true.size() != y_pred.size()) throw ContractError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] == positive, p = y_pred[i] == positive;
    if (t && p)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double f1_score(const Confusion& c) {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return c.tp == 0 ? 0.0 : 2.0 * c.tp / denom;
}

double f1_score(std::span<const int> y_true, std::span<const int> y_pred, int positive) {
  return f1_score(confusion(y_true, y_pred, positive));
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const Eigen::Index> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXi take_rows(const Eigen::VectorXi& y, std::span<const Eigen::Index> idx) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[idx[i]];
  return out;
}

// ---------------------------------------------------------------- logistic regression

namespace {

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  if (x.rows() != y.size()) throw ContractError("training data: row/label count mismatch");
  if (x.rows() == 0) throw DataError("training data is empty");
  if (!x.allFinite()) throw DataError("training data contains non-finite values");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0 && y[i] != 1) throw ContractError("labels must be 0 or 1");
  const auto positives = y.sum();
  if (positives == 0 || positives == y.size())
    throw DataError("degenerate target: all training labels belong to one class");
}

// log(1 + exp(-m)) without overflow.
double log1pexp_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

// 1 / (1 + exp(m)).
double sigmoid_neg(double m) {
  if (m >= 0) {
    const double e = std::exp(-m);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(m));
}

struct SmoothPart {
  const Eigen::MatrixXd& xs;
  Eigen::VectorXd sign;  // +1 / -1
  const LogisticPoint& point;

  SmoothPart(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const LogisticPoint& p)
      : xs(x), sign((2 * y.array() - 1).cast<double>().matrix()), point(p) {}

  // Loss plus the L2 term when applicable; fills the gradient when requested.
  double value(const Eigen::VectorXd& w, double b, Eigen::VectorXd* grad_w, double* grad_b) const {
    const Eigen::VectorXd margin = sign.cwiseProduct((xs * w).array().matrix() + Eigen::VectorXd::Constant(xs.rows(), b));
    double loss = 0.0;
    Eigen::VectorXd dz;
    if (grad_w) dz.resize(xs.rows());
    for (Eigen::Index i = 0; i < margin.size(); ++i) {
      loss += log1pexp_neg(margin[i]);
      if (grad_w) dz[i] = -point.C * sign[i] * sigmoid_neg(margin[i]);
    }
    double f = point.C * loss;
    if (point.penalty == Penalty::L2) f += 0.5 * w.squaredNorm();
    if (grad_w) {
      *grad_w = xs.transpose() * dz;
      if (point.penalty == Penalty::L2) *grad_w += w;
      *grad_b = dz.sum();
    }
    return f;
  }
};

}  // namespace

double logistic_objective(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const Eigen::VectorXd& w, double b,
                          const LogisticPoint& point) {
  const SmoothPart f(xs, y, point);
  double v = f.value(w, b, nullptr, nullptr);
  if (point.penalty == Penalty::L1) v += w.lpNorm<1>();
  return v;
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const Eigen::VectorXd& w,
                                  double b, const LogisticPoint& point) {
  const SmoothPart f(xs, y, point);
  Eigen::VectorXd gw;
  double gb = 0;
  f.value(w, b, &gw, &gb);
  if (point.penalty == Penalty::L1) gw += w.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
  Eigen::VectorXd g(gw.size() + 1);
  g << gw, gb;
  return g;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& xs, const Eigen::VectorXi& y, const LogisticPoint& point,
                         int max_iter) {
  if (!(point.C > 0)) throw ContractError("logistic: C must be positive");
  const SmoothPart smooth(xs, y, point);
  const bool l1 = point.penalty == Penalty::L1;
  const Eigen::Index p = xs.cols();

  const auto prox = [&](Eigen::VectorXd w, double step) {
    if (l1) w = w.unaryExpr([step](double v) { return std::copysign(std::max(std::abs(v) - step, 0.0), v); });
    return w;
  };
  const auto full_objective = [&](const Eigen::VectorXd& w, double b) {
    double v = smooth.value(w, b, nullptr, nullptr);
    if (l1) v += w.lpNorm<1>();
    return v;
  };

  LogisticFit fit;
  fit.w = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd yw = fit.w;
  double yb = 0.0;
  double momentum = 1.0;
  double lipschitz = 1.0;
  double current = full_objective(fit.w, fit.b);
  Eigen::VectorXd gw;
  double gb = 0;

  for (int it = 1; it <= max_iter; ++it) {
    const double fy = smooth.value(yw, yb, &gw, &gb);
    Eigen::VectorXd nw;
    double nb = 0;
    for (;;) {
      const double step = 1.0 / lipschitz;
      nw = prox(yw - step * gw, step);
      nb = yb - step * gb;
      const Eigen::VectorXd dw = nw - yw;
      const double db = nb - yb;
      const double model = fy + gw.dot(dw) + gb * db + 0.5 * lipschitz * (dw.squaredNorm() + db * db);
      if (smooth.value(nw, nb, nullptr, nullptr) <= model + 1e-12 * std::abs(model)) break;
      lipschitz *= 2.0;
      if (!std::isfinite(lipschitz)) throw DataError("logistic line search failed");
    }
    const double next = full_objective(nw, nb);
    const double change = std::max((nw - fit.w).cwiseAbs().maxCoeff(), std::abs(nb - fit.b));

    if (next > current) {
      // Objective went up: drop the momentum and restart from the last iterate.
      momentum = 1.0;
      yw = fit.w;
      yb = fit.b;
      fit.iterations = it;
      continue;
    }
    const double next_momentum = (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0;
    const double beta = (momentum - 1.0) / next_momentum;
    yw = nw + beta * (nw - fit.w);
    yb = nb + beta * (nb - fit.b);
    fit.w = std::move(nw);
    fit.b = nb;
    momentum = next_momentum;
    current = next;
    fit.iterations = it;
    lipschitz *= 0.95;
    if (change < point.tolerance) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

TrainedModel train_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const LogisticPoint& point,
                            std::vector<std::string> names) {
  check_training_data(x, y);
  TrainedModel m;
  m.family = Family::Logistic;
  m.point = point;
  m.feature_names = std::move(names);
  m.scaler = Standardizer::fit(x);
  const LogisticFit fit = fit_logistic(m.scaler.apply(x), y, point);
  m.weights = fit.w;
  m.intercept = fit.b;
  return m;
}

// ---------------------------------------------------------------- random forest

int Tree::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].label;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.feature < 0) continue;
    d[static_cast<std::size_t>(n.left)] = d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

namespace {

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, int max_depth, std::mt19937_64& rng)
      : x_(x), y_(y), max_depth_(max_depth), rng_(rng) {
    features_per_split_ = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  }

  Tree grow(std::vector<Eigen::Index> rows) {
    Tree t;
    build(t, std::move(rows), 0);
    return t;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0;
    double impurity = std::numeric_limits<double>::infinity();
  };

  int build(Tree& t, std::vector<Eigen::Index> rows, int depth) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    long pos = 0;
    for (auto r : rows) pos += y_[r];
    const long n = static_cast<long>(rows.size());
    t.nodes[static_cast<std::size_t>(id)].label = 2 * pos > n ? 1 : 0;
    if (pos == 0 || pos == n || (max_depth_ > 0 && depth >= max_depth_)) return id;

    const Split s = best_split(rows, pos);
    if (s.feature < 0) return id;
    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (x_(r, s.feature) <= s.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(t, std::move(left), depth + 1);
    const int r = build(t, std::move(right), depth + 1);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Examines ceil(sqrt(p)) random features; keeps drawing beyond that until a usable split
  // exists. Zero-gain splits are allowed so that interaction effects (XOR) can be found.
  Split best_split(const std::vector<Eigen::Index>& rows, long pos_total) {
    std::vector<int> order(static_cast<std::size_t>(x_.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    Split best;
    std::vector<std::pair<double, int>> vals(rows.size());
    const double n = static_cast<double>(rows.size());
    int examined = 0;
    for (int f : order) {
      if (examined >= features_per_split_ && best.feature >= 0) break;
      ++examined;
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {x_(rows[i], f), y_[rows[i]]};
      std::sort(vals.begin(), vals.end());
      long pos_left = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        pos_left += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double pl = static_cast<double>(pos_left) / nl;
        const double pr = static_cast<double>(pos_total - pos_left) / nr;
        const double impurity = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr);
        if (impurity < best.impurity) {
          best.impurity = impurity;
          best.feature = f;
          double mid = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
          if (!(mid < vals[i + 1].first)) mid = vals[i].first;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXi& y_;
  int max_depth_;
  int features_per_split_;
  std::mt19937_64& rng_;
};

}  // namespace

TrainedModel train_forest(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const ForestPoint& point,
                          std::uint64_t seed, std::vector<std::string> names) {
  check_training_data(x, y);
  if (point.n_trees < 1) throw ContractError("forest: n_trees must be at least 1");
  if (point.max_depth < 0) throw ContractError("forest: max_depth must be >= 0");
  TrainedModel m;
  m.family = Family::Forest;
  m.point = point;
  m.seed = seed;
  m.feature_names = std::move(names);
  m.scaler = Standardizer::fit(x);
  const Eigen::MatrixXd xs = m.scaler.apply(x);
  const auto n = xs.rows();
  m.trees.reserve(static_cast<std::size_t>(point.n_trees));
  for (int t = 0; t < point.n_trees; ++t) {
    std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(sequence);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (auto& r : rows) r = pick(rng);
    TreeGrower grower(xs, y, point.max_depth, rng);
    m.trees.push_back(grower.grow(std::move(rows)));
  }
  return m;
}

TrainedModel train(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const HyperPoint& point, std::uint64_t seed,
                   std::vector<std::string> names) {
  if (const auto* l = std::get_if<LogisticPoint>(&point)) return train_logistic(x, y, *l, std::move(names));
  return train_forest(x, y, std::get<ForestPoint>(point), seed, std::move(names));
}

// ---------------------------------------------------------------- prediction

Eigen::VectorXd TrainedModel::score(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd xs = scaler.apply(x);
  Eigen::VectorXd s(xs.rows());
  if (family == Family::Logistic) {
    const Eigen::VectorXd z = (xs * weights).array() + intercept;
    for (Eigen::Index i = 0; i < z.size(); ++i) s[i] = 1.0 / (1.0 + std::exp(-z[i]));
  } else {
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const Eigen::VectorXd row = xs.row(i).transpose();
      int votes = 0;
      for (const auto& t : trees) votes += t.predict(row);
      s[i] = static_cast<double>(votes) / static_cast<double>(trees.size());
    }
  }
  return s;
}

Eigen::VectorXi TrainedModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::VectorXd s = score(x);
  return (s.array() > 0.5).cast<int>();
}

Eigen::VectorXi TrainedModel::predict(const Eigen::MatrixXd& x, const std::vector<std::string>& names) const {
  if (names != feature_names) {
    std::ostringstream msg;
    msg << "feature contract mismatch:";
    const std::set<std::string> mine(feature_names.begin(), feature_names.end());
    const std::set<std::string> theirs(names.begin(), names.end());
    for (const auto& n : feature_names)
      if (!theirs.contains(n)) msg << " missing '" << n << "'";
    for (const auto& n : names)
      if (!mine.contains(n)) msg << " unexpected '" << n << "'";
    if (mine == theirs) msg << " same columns in a different order";
    throw ContractError(msg.str());
  }
  return predict(x);
}

// ---------------------------------------------------------------- grid search

GridResult grid_search_cv(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const ModelSpec& spec, int k,
                          std::uint64_t seed, const std::vector<std::string>& names, int jobs) {
  if (spec.grid.empty()) throw ContractError("grid_search_cv: empty grid");
  check_training_data(x, y);
  const std::vector<int> labels(y.data(), y.data() + y.size());
  const auto folds = stratified_kfold(labels, k, seed);

  std::vector<std::vector<Eigen::Index>> train_idx(static_cast<std::size_t>(k)), test_idx(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < folds.size(); ++i)
    for (int f = 0; f < k; ++f)
      (folds[i] == f ? test_idx : train_idx)[static_cast<std::size_t>(f)].push_back(static_cast<Eigen::Index>(i));

  const std::size_t points = spec.grid.size();
  std::vector<double> fold_f1(points * static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  parallel_for(fold_f1.size(), jobs, [&](std::size_t task) {
    const std::size_t p = task / static_cast<std::size_t>(k);
    const std::size_t f = task % static_cast<std::size_t>(k);
    try {
      const TrainedModel m = train(take_rows(x, train_idx[f]), take_rows(y, train_idx[f]), spec.grid[p], spec.seed);
      const Eigen::VectorXi truth = take_rows(y, test_idx[f]);
      const Eigen::VectorXi pred = m.predict(take_rows(x, test_idx[f]));
      fold_f1[task] = f1_score(std::span<const int>(truth.data(), static_cast<std::size_t>(truth.size())),
                               std::span<const int>(pred.data(), static_cast<std::size_t>(pred.size())));
    } catch (const Error&) {
    }
  });

  GridResult result;
  result.point_f1.assign(points, std::numeric_limits<double>::quiet_NaN());
  std::optional<std::size_t> best;
  for (std::size_t p = 0; p < points; ++p) {
    double sum = 0;
    bool ok = true;
    for (int f = 0; f < k; ++f) {
      const double v = fold_f1[p * static_cast<std::size_t>(k) + static_cast<std::size_t>(f)];
      if (std::isnan(v)) ok = false;
      sum += v;
    }
    if (!ok) continue;
    result.point_f1[p] = sum / k;
    if (!best || result.point_f1[p] > result.point_f1[*best]) best = p;
  }
  if (!best) throw DataError("grid search: every grid point failed to train");
  result.best = spec.grid[*best];
  result.mean_f1 = result.point_f1[*best];
  result.model = train(x, y, result.best, spec.seed, names);
  return result;
}

// ---------------------------------------------------------------- downsampling

Downsample downsample_majority(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double ratio, std::uint64_t seed) {
  if (x.rows() != y.size()) throw ContractError("downsample: row/label count mismatch");
  if (!(ratio > 0)) throw ContractError("downsample: ratio must be positive");
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  auto& minority = pos.size() <= neg.size() ? pos : neg;
  auto& majority = pos.size() <= neg.size() ? neg : pos;
  if (minority.empty()) throw DataError("downsample: minority class is empty");

  const auto wanted = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(minority.size())));
  const std::size_t keep = std::min(wanted, majority.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, majority.size() - 1);
    std::swap(majority[i], majority[pick(rng)]);
  }
  Downsample d;
  d.minority = minority.size();
  d.majority = keep;
  d.rows = minority;
  d.rows.insert(d.rows.end(), majority.begin(), majority.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(d.rows.begin(), d.rows.end());
  d.x = take_rows(x, d.rows);
  d.y = take_rows(y, d.rows);
  return d;
}

// ---------------------------------------------------------------- serialization

namespace {
constexpr int kModelFormatVersion = 1;

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

std::string model_to_json(const TrainedModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "cohortlens-model";
  j["version"] = kModelFormatVersion;
  j["family"] = to_string(m.family);
  nlohmann::ordered_json hp;
  if (const auto* l = std::get_if<LogisticPoint>(&m.point)) {
    hp["penalty"] = l->penalty == Penalty::L1 ? "l1" : "l2";
    hp["C"] = l->C;
    hp["tolerance"] = l->tolerance;
  } else {
    const auto& f = std::get<ForestPoint>(m.point);
    hp["max_depth"] = f.max_depth;
    hp["n_trees"] = f.n_trees;
  }
  j["hyperparameters"] = std::move(hp);
  j["seed"] = m.seed;
  j["feature_names"] = m.feature_names;
  j["standardization"] = {{"mean", to_vec(m.scaler.mean)}, {"sd", to_vec(m.scaler.sd)}};
  if (m.family == Family::Logistic) {
    j["weights"] = to_vec(m.weights);
    j["intercept"] = m.intercept;
  } else {
    nlohmann::ordered_json trees = nlohmann::ordered_json::array();
    for (const auto& t : m.trees) {
      nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
      for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
      trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
  }
  return j.dump() + "\n";
}

TrainedModel model_from_json(std::string_view text) {
  TrainedModel m;
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    if (j.at("format") != "cohortlens-model") throw SchemaError("format", "not a cohortlens model document");
    if (j.at("version").get<int>() != kModelFormatVersion) throw SchemaError("version", "unsupported model version");
    m.family = parse_family(j.at("family").get<std::string>());
    const auto& hp = j.at("hyperparameters");
    if (m.family == Family::Logistic) {
      LogisticPoint p;
      p.penalty = hp.at("penalty") == "l1" ? Penalty::L1 : Penalty::L2;
      p.C = hp.at("C").get<double>();
      p.tolerance = hp.at("tolerance").get<double>();
      m.point = p;
      m.weights = from_vec(j.at("weights").get<std::vector<double>>());
      m.intercept = j.at("intercept").get<double>();
    } else {
      m.point = ForestPoint{hp.at("max_depth").get<int>(), hp.at("n_trees").get<int>()};
      for (const auto& tj : j.at("trees")) {
        Tree t;
        for (const auto& nj : tj)
          t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(), nj.at(3).get<int>(),
                             nj.at(4).get<int>()});
        m.trees.push_back(std::move(t));
      }
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.scaler.mean = from_vec(j.at("standardization").at("mean").get<std::vector<double>>());
    m.scaler.sd = from_vec(j.at("standardization").at("sd").get<std::vector<double>>());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("model", std::string("model JSON: ") + e.what());
  }
  return m;
}

}  // namespace cohortlens
