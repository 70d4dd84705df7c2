#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "cohortlens/error.hpp"
#include "cohortlens/learner.hpp"

using namespace cohortlens;

namespace {

std::span<const int> sp(const Eigen::VectorXi& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

struct Blobs {
  Eigen::MatrixXd x;
  Eigen::VectorXi y;
};

Blobs blobs(int n, double separation, std::uint64_t seed, int p = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Blobs b{Eigen::MatrixXd(n, p), Eigen::VectorXi(n)};
  for (int i = 0; i < n; ++i) {
    b.y(i) = i % 3 == 0;
    for (int j = 0; j < p; ++j) b.x(i, j) = z(rng) + (j == 0 && b.y(i) ? separation : 0.0);
  }
  return b;
}

}  // namespace

TEST_CASE("stratified folds") {
  Eigen::VectorXi y(10);
  y << 1, 1, 1, 1, 1, 0, 0, 0, 0, 0;
  const auto folds = stratified_kfold(sp(y), 5, 42);
  std::map<int, std::pair<int, int>> per;
  for (int i = 0; i < 10; ++i) (y(i) ? per[folds[i]].first : per[folds[i]].second)++;
  REQUIRE(per.size() == 5);
  for (const auto& [f, counts] : per) CHECK(counts == std::pair<int, int>{1, 1});
  CHECK(stratified_kfold(sp(y), 5, 42) == folds);

  Eigen::VectorXi big(103);
  for (int i = 0; i < 103; ++i) big(i) = i < 31;
  const auto f2 = stratified_kfold(sp(big), 5, 1);
  std::map<int, int> sizes;
  for (int f : f2) sizes[f]++;
  for (const auto& [f, s] : sizes) CHECK((s == 20 || s == 21));
  CHECK_THROWS_AS(stratified_kfold(sp(y), 6, 1), DataError);
  CHECK_THROWS_AS(stratified_kfold(sp(y), 1, 1), ContractError);
}

TEST_CASE("logistic gradient matches finite differences") {
  const auto b = blobs(40, 1.0, 3);
  const Eigen::MatrixXd xs = Standardizer::fit(b.x).apply(b.x);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (Penalty pen : {Penalty::L2, Penalty::L1}) {
    LogisticPoint pt{pen, 0.7, 1e-4};
    Eigen::VectorXd w(3);
    for (int j = 0; j < 3; ++j) w(j) = z(rng) + (j % 2 ? 0.5 : -0.5);
    const double bias = 0.3;
    const Eigen::VectorXd g = logistic_gradient(xs, b.y, w, bias, pt);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      double bp = bias, bm = bias;
      if (j < 3)
        wp(j) += h, wm(j) -= h;
      else
        bp += h, bm -= h;
      const double num =
          (logistic_objective(xs, b.y, wp, bp, pt) - logistic_objective(xs, b.y, wm, bm, pt)) / (2 * h);
      CHECK(g(j) == doctest::Approx(num).epsilon(1e-5));
    }
  }
}

TEST_CASE("logistic reaches a stationary point") {
  const auto b = blobs(120, 1.5, 5);
  const Eigen::MatrixXd xs = Standardizer::fit(b.x).apply(b.x);
  const LogisticPoint pt{Penalty::L2, 1.0, 1e-6};
  const auto fit = fit_logistic(xs, b.y, pt);
  CHECK(fit.converged);
  CHECK(logistic_gradient(xs, b.y, fit.w, fit.b, pt).norm() < 1e-3);
  const double best = logistic_objective(xs, b.y, fit.w, fit.b, pt);
  Eigen::VectorXd w2 = fit.w;
  w2(0) += 0.01;
  CHECK(logistic_objective(xs, b.y, w2, fit.b, pt) > best);
}

TEST_CASE("separable data is classified perfectly") {
  const auto b = blobs(90, 8.0, 1);
  for (const HyperPoint& p : {HyperPoint(LogisticPoint{Penalty::L2, 10, 1e-4}),
                              HyperPoint(LogisticPoint{Penalty::L1, 10, 1e-4}), HyperPoint(ForestPoint{2, 20})}) {
    const auto m = train(b.x, b.y, p, 7);
    CHECK(m.predict(b.x) == b.y);
  }
}

TEST_CASE("forest learns XOR and memorizes training data") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(200, 2);
  Eigen::VectorXi y(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = u(rng), x(i, 1) = u(rng);
    y(i) = (x(i, 0) > 0) != (x(i, 1) > 0);
  }
  const auto m = train_forest(x, y, ForestPoint{0, 50}, 3);
  CHECK(f1_score(sp(y), sp(m.predict(x))) > 0.97);
  const auto lin = train_logistic(x, y, LogisticPoint{});
  CHECK(f1_score(sp(y), sp(lin.predict(x))) < 0.8);

  Eigen::VectorXi noise(200);
  for (int i = 0; i < 200; ++i) noise(i) = std::uniform_int_distribution<int>(0, 1)(rng);
  const auto mem = train_forest(x, noise, ForestPoint{0, 50}, 4);
  const Eigen::VectorXi pred = mem.predict(x);
  CHECK((pred.array() == noise.array()).count() >= 190);
  for (const auto& t : train_forest(x, noise, ForestPoint{2, 5}, 4).trees) CHECK(t.depth() <= 2);
}

TEST_CASE("training is deterministic in the seed") {
  const auto b = blobs(80, 1.0, 8);
  const auto a1 = train_forest(b.x, b.y, ForestPoint{4, 30}, 11);
  const auto a2 = train_forest(b.x, b.y, ForestPoint{4, 30}, 11);
  CHECK(a1.trees == a2.trees);
  const auto l1 = train_logistic(b.x, b.y, LogisticPoint{Penalty::L1, 1, 1e-4});
  const auto l2 = train_logistic(b.x, b.y, LogisticPoint{Penalty::L1, 1, 1e-4});
  CHECK(l1.weights == l2.weights);
  const auto g1 = grid_search_cv(b.x, b.y, ModelSpec::forest(5, 10), 5, 5, {}, 1);
  const auto g2 = grid_search_cv(b.x, b.y, ModelSpec::forest(5, 10), 5, 5, {}, 3);
  CHECK(g1.point_f1 == g2.point_f1);
  CHECK(g1.model.trees == g2.model.trees);
}

TEST_CASE("training rejects bad inputs") {
  const auto b = blobs(20, 1.0, 2);
  const Eigen::VectorXi ones = Eigen::VectorXi::Ones(20);
  CHECK_THROWS_AS(train_logistic(b.x, ones, LogisticPoint{}), DataError);
  CHECK_THROWS_AS(train_forest(b.x, ones, ForestPoint{}, 1), DataError);
  Eigen::MatrixXd nan = b.x;
  nan(0, 0) = std::nan("");
  CHECK_THROWS_AS(train_logistic(nan, b.y, LogisticPoint{}), DataError);
  CHECK_THROWS_AS(train_logistic(b.x, b.y, LogisticPoint{Penalty::L2, 0, 1e-4}), ContractError);
}

TEST_CASE("F1 examples") {
  const std::vector<int> t = {1, 1, 0, 0, 1};
  const std::vector<int> p = {1, 0, 1, 0, 1};
  const auto c = confusion(t, p);
  CHECK(c == Confusion{2, 1, 1, 1});
  CHECK(f1_score(c) == doctest::Approx(2.0 / 3));
  CHECK(f1_score(std::vector<int>{0, 0}, std::vector<int>{0, 0}) == 0);
  CHECK(f1_score(std::vector<int>{1, 0}, std::vector<int>{1, 0}) == 1);
  CHECK(f1_score(t, p, 0) == doctest::Approx(0.5));
}

TEST_CASE("majority downsampling") {
  Eigen::MatrixXd x(60, 1);
  Eigen::VectorXi y(60);
  for (int i = 0; i < 60; ++i) x(i, 0) = i, y(i) = i < 20;
  const auto d = downsample_majority(x, y, 1.0, 3);
  CHECK(d.minority == 20);
  CHECK(d.majority == 20);
  CHECK(d.y.sum() == 20);
  CHECK(d.x.rows() == 40);
  CHECK(std::is_sorted(d.rows.begin(), d.rows.end()));
  CHECK(downsample_majority(x, y, 1.0, 3).rows == d.rows);

  Eigen::MatrixXd x2(50, 1);
  Eigen::VectorXi y3(50);
  for (int i = 0; i < 50; ++i) x2(i, 0) = i, y3(i) = i < 20;
  const auto d2 = downsample_majority(x2, y3, 1.0, 1);
  CHECK(d2.x.rows() == 40);
  CHECK(downsample_majority(x2, y3, 5.0, 1).x.rows() == 50);
  CHECK_THROWS_AS(downsample_majority(x2, Eigen::VectorXi::Zero(50), 1.0, 1), DataError);
}

TEST_CASE("grid search") {
  const auto b = blobs(60, 3.0, 4);
  ModelSpec spec;
  spec.family = Family::Logistic;
  spec.grid = {LogisticPoint{Penalty::L2, 1, 1e-4}, LogisticPoint{Penalty::L2, 1, 1e-4}};
  const auto tie = grid_search_cv(b.x, b.y, spec, 3, 1);
  CHECK(tie.point_f1[0] == tie.point_f1[1]);
  CHECK(std::get<LogisticPoint>(tie.best) == LogisticPoint{Penalty::L2, 1, 1e-4});
  spec.grid.resize(1);
  const auto single = grid_search_cv(b.x, b.y, spec, 3, 1);
  CHECK(single.point_f1.size() == 1);
  CHECK(single.mean_f1 == single.point_f1[0]);

  const auto full = grid_search_cv(b.x, b.y, ModelSpec::logistic(2), 5, 2);
  CHECK(full.point_f1.size() == 20);
  CHECK(full.mean_f1 == *std::max_element(full.point_f1.begin(), full.point_f1.end()));
  CHECK(ModelSpec::forest(1).grid.size() == 5);
  CHECK(std::get<ForestPoint>(ModelSpec::forest(1).grid.back()).max_depth == 0);
}

TEST_CASE("model JSON round-trip and column contract") {
  const auto b = blobs(50, 2.0, 6);
  const std::vector<std::string> names = {"alpha", "beta", "gamma"};
  for (const HyperPoint& p : {HyperPoint(LogisticPoint{Penalty::L1, 10, 1e-4}), HyperPoint(ForestPoint{4, 15})}) {
    const auto m = train(b.x, b.y, p, 12, names);
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.feature_names == names);
    CHECK(back.point == m.point);
    CHECK(back.predict(b.x, names) == m.predict(b.x, names));
    CHECK(back.score(b.x) == m.score(b.x));
    CHECK(model_to_json(back) == model_to_json(m));
    CHECK_THROWS_AS(m.predict(b.x, {"alpha", "gamma", "beta"}), ContractError);
  }
  CHECK_THROWS(model_from_json("{\"format\": \"other\"}"));
  CHECK_THROWS_AS(model_from_json("{"), ParseError);
}
