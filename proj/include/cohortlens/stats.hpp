#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortlens/error.hpp"

namespace cohortlens::stats {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// 1-based ranks; tied values share the mean of the ranks they span.
template <typename Derived>
Vector<typename Derived::Scalar> average_ranks(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
  Vector<Scalar> ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[static_cast<std::size_t>(j + 1)]) == x(order[static_cast<std::size_t>(i)])) ++j;
    const Scalar mean_rank = static_cast<Scalar>(i + j + 2) / Scalar(2);
    for (Eigen::Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = mean_rank;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation; throws DataError when either input is constant.
template <typename DX, typename DY>
typename DX::Scalar pearson(const Eigen::DenseBase<DX>& x, const Eigen::DenseBase<DY>& y) {
  using Scalar = typename DX::Scalar;
  if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
  const Vector<Scalar> xc = x.derived().template cast<Scalar>().array() - x.derived().template cast<Scalar>().mean();
  const Vector<Scalar> yc = y.derived().template cast<Scalar>().array() - y.derived().template cast<Scalar>().mean();
  const Scalar sxx = xc.squaredNorm();
  const Scalar syy = yc.squaredNorm();
  if (sxx == Scalar(0) || syy == Scalar(0)) throw DataError("correlation undefined for a constant vector");
  return std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), Scalar(-1), Scalar(1));
}

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with Lentz's method.
double incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of a Student-t statistic.
double student_t_two_tailed(double t, double dof);

struct Correlation {
  double rho = 0;
  double p_value = 1;
};

/// Spearman's rank correlation with a t-approximation p-value (n - 2 degrees of freedom).
template <typename DX, typename DY>
Correlation spearman(const Eigen::DenseBase<DX>& x, const Eigen::DenseBase<DY>& y) {
  const Eigen::Index n = x.size();
  if (n != y.size()) throw ContractError("spearman: length mismatch");
  if (n < 3) throw ContractError("spearman: need at least 3 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.rho = static_cast<double>(pearson(rx, ry));
  if (std::abs(c.rho) >= 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.rho * std::sqrt(static_cast<double>(n - 2) / (1.0 - c.rho * c.rho));
    c.p_value = student_t_two_tailed(t, static_cast<double>(n - 2));
  }
  return c;
}

struct FeatureScore {
  std::string name;
  double score = 0;
  bool operator==(const FeatureScore&) const = default;
};

struct ElbowOptions {
  std::size_t window_begin = 5;  // 1-based candidate cutoffs, inclusive
  std::size_t window_end = 25;
  std::optional<std::size_t> override_k;
};

struct Elbow {
  std::size_t k = 0;
  bool warning = false;
};

/// Cutoff k maximizing score[k] / score[k+1] (1-based) over the window, skipping positions
/// where score[k+1] is zero. Equal scores give k = n; no distinguished drop gives the window
/// end; both set `warning`. Scores must be non-increasing.
Elbow elbow_cutoff(std::span<const double> scores, const ElbowOptions& options = {});

struct RankedFeatures {
  std::vector<FeatureScore> ranking;  // non-increasing score, ties by name
  std::size_t selected_k = 0;
  bool warning = false;

  std::vector<std::string> selected() const;
  bool operator==(const RankedFeatures&) const = default;
};

/// Raw per-column chi-squared scores against a discrete target: with observed_c the column
/// total over class c and expected_c = prevalence_c * column total, score = sum_c (o - e)^2 / e.
/// Columns with a negative minimum are shifted to start at zero.
template <typename Derived>
std::vector<double> chi2_columns(const Eigen::MatrixBase<Derived>& x, std::span<const int> target) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != target.size()) throw ContractError("chi2: target length mismatch");
  if (!x.allFinite()) throw ContractError("chi2: non-finite feature values");
  std::vector<int> classes(target.begin(), target.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<double> scores(static_cast<std::size_t>(x.cols()), 0.0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Vector<Scalar> col = x.col(j);
    const Scalar lo = n > 0 ? col.minCoeff() : Scalar(0);
    if (lo < Scalar(0)) col.array() -= lo;
    const double total = static_cast<double>(col.sum());
    if (total <= 0.0) continue;
    double score = 0.0;
    for (int c : classes) {
      double observed = 0.0;
      std::size_t members = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (target[static_cast<std::size_t>(i)] == c) {
          observed += static_cast<double>(col(i));
          ++members;
        }
      const double expected = static_cast<double>(members) / static_cast<double>(n) * total;
      score += (observed - expected) * (observed - expected) / expected;
    }
    scores[static_cast<std::size_t>(j)] = score;
  }
  return scores;
}

/// Sorts by score and applies `elbow_cutoff`. Fewer than three features select them all.
RankedFeatures rank_features(std::span<const double> scores, const std::vector<std::string>& names,
                             const ElbowOptions& options = {});

template <typename Derived>
RankedFeatures chi2_scores(const Eigen::MatrixBase<Derived>& x, std::span<const int> target,
                           const std::vector<std::string>& names, const ElbowOptions& options = {}) {
  if (names.size() != static_cast<std::size_t>(x.cols())) throw ContractError("chi2: name count mismatch");
  const auto scores = chi2_columns(x, target);
  return rank_features(scores, names, options);
}

}  // namespace cohortlens::stats
