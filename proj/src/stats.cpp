#include "cohortlens/stats.hpp"

#include <limits>

namespace cohortlens::stats {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw ContractError("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fastest on the side of the mean.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double dof) {
  if (!(dof > 0)) throw ContractError("student_t: degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

Elbow elbow_cutoff(std::span<const double> scores, const ElbowOptions& options) {
  const std::size_t n = scores.size();
  if (n < 3) throw ContractError("elbow_cutoff: need at least 3 scores");
  for (std::size_t i = 1; i < n; ++i)
    if (scores[i] > scores[i - 1]) throw ContractError("elbow_cutoff: scores must be non-increasing");
  if (options.override_k) return {std::clamp<std::size_t>(*options.override_k, 1, n), false};
  if (std::all_of(scores.begin(), scores.end(), [&](double s) { return s == scores.front(); }))
    return {n, true};

  const std::size_t first = std::max<std::size_t>(options.window_begin, 1);
  const std::size_t last = std::min(options.window_end, n - 1);
  const std::size_t fallback = std::clamp<std::size_t>(options.window_end, 1, n);

  double best = -1.0, worst = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = first; k <= last; ++k) {
    const double next = scores[k];  // score at 1-based position k + 1
    if (next <= 0.0) continue;
    const double ratio = scores[k - 1] / next;
    if (ratio > best) {
      best = ratio;
      best_k = k;
    }
    worst = std::min(worst, ratio);
  }
  if (best_k == 0) return {fallback, true};
  if (best - worst <= 1e-9 * best) return {fallback, true};
  return {best_k, false};
}

std::vector<std::string> RankedFeatures::selected() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < selected_k && i < ranking.size(); ++i) out.push_back(ranking[i].name);
  return out;
}

RankedFeatures rank_features(std::span<const double> scores, const std::vector<std::string>& names,
                             const ElbowOptions& options) {
  if (scores.size() != names.size()) throw ContractError("rank_features: name count mismatch");
  RankedFeatures r;
  for (std::size_t j = 0; j < scores.size(); ++j) r.ranking.push_back({names[j], scores[j]});
  std::sort(r.ranking.begin(), r.ranking.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name < b.name;
  });
  if (r.ranking.size() < 3) {
    r.selected_k = r.ranking.size();
    return r;
  }
  std::vector<double> sorted;
  for (const auto& f : r.ranking) sorted.push_back(f.score);
  const Elbow e = elbow_cutoff(sorted, options);
  r.selected_k = e.k;
  r.warning = e.warning;
  return r;
}

}  // namespace cohortlens::stats
