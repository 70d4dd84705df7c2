#include "cohortlens/harness.hpp"

#include <chrono>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"
#include "cohortlens/parallel.hpp"

namespace cohortlens {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::SameClass: return "same_class";
    case Mode::CrossOffering: return "cross_offering";
    case Mode::CrossCourse: return "cross_course";
    case Mode::AtRisk: return "at_risk";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::SameClass, Mode::CrossOffering, Mode::CrossCourse, Mode::AtRisk})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown experiment mode '" + std::string(s) + "'");
}

std::string_view to_string(FamilyChoice f) {
  switch (f) {
    case FamilyChoice::Logistic: return "logistic";
    case FamilyChoice::Forest: return "forest";
    case FamilyChoice::Best: return "best";
  }
  return "?";
}

FamilyChoice parse_family_choice(std::string_view s) {
  if (s == "logistic") return FamilyChoice::Logistic;
  if (s == "forest") return FamilyChoice::Forest;
  if (s == "best") return FamilyChoice::Best;
  throw ConfigError("unknown model '" + std::string(s) + "' (expected logistic, forest or best)");
}

void ExperimentPlan::validate() const {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (n_trees < 1) throw ConfigError("n_trees must be at least 1");
  if (!(downsample_ratio > 0)) throw ConfigError("downsample ratio must be positive");
  if ((mode == Mode::CrossOffering || mode == Mode::CrossCourse) && !test)
    throw ConfigError(std::string(to_string(mode)) + " needs a test course");
  if (test && (mode == Mode::CrossOffering || mode == Mode::CrossCourse) && test->course == train.course)
    throw ConfigError("cross-offering/cross-course evaluation needs distinct train and test courses");
  if (mode == Mode::SameClass && test) throw ConfigError("same-class evaluation takes no test course");
}

bool ExperimentPlan::operator==(const ExperimentPlan& o) const {
  return mode == o.mode && train == o.train && test == o.test && family == o.family && method == o.method &&
         k == o.k && seed == o.seed && top_k == o.top_k && elbow.window_begin == o.elbow.window_begin &&
         elbow.window_end == o.elbow.window_end && elbow.override_k == o.elbow.override_k &&
         n_trees == o.n_trees && downsample_ratio == o.downsample_ratio;
}

bool EvaluationReport::operator==(const EvaluationReport& o) const {
  return plan == o.plan && target == o.target && family == o.family && f1 == o.f1 && fold_f1 == o.fold_f1 &&
         confusion == o.confusion && candidates == o.candidates && selected_features == o.selected_features &&
         fold_selections == o.fold_selections && downsample == o.downsample &&
         model_artifact == o.model_artifact && warnings == o.warnings;
}

std::string cell_name(const ExperimentPlan& plan) {
  std::string name = std::string(to_string(plan.mode)) + "_" + plan.train.course + "_" +
                     std::string(to_string(plan.train.slice));
  if (plan.test) name += "__" + plan.test->course + "_" + std::string(to_string(plan.test->slice));
  name += "_" + std::string(to_string(plan.method)) + "_" + std::string(to_string(plan.family));
  return name;
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Family> families_of(FamilyChoice c) {
  switch (c) {
    case FamilyChoice::Logistic: return {Family::Logistic};
    case FamilyChoice::Forest: return {Family::Forest};
    case FamilyChoice::Best: return {Family::Logistic, Family::Forest};
  }
  return {};
}

ModelSpec spec_for(Family f, const ExperimentPlan& plan, std::uint64_t seed) {
  return f == Family::Logistic ? ModelSpec::logistic(seed) : ModelSpec::forest(seed, plan.n_trees);
}

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
  return out;
}

std::span<const int> as_span(const Eigen::VectorXi& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Fitted {
  TrainedModel model;
  Selection selection;
  double cv_f1 = 0;
  std::optional<std::pair<std::size_t, std::size_t>> downsample;
};

Fitted fit_cell(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const std::vector<std::string>& names,
                const ExperimentPlan& plan, Family family, std::uint64_t seed, int jobs) {
  Fitted out;
  const Eigen::MatrixXd* xt = &x;
  const Eigen::VectorXi* yt = &y;
  Downsample ds;
  if (plan.at_risk_target()) {
    ds = downsample_majority(x, y, plan.downsample_ratio, derive_seed(seed, 1));
    out.downsample = std::make_pair(ds.minority, ds.majority);
    xt = &ds.x;
    yt = &ds.y;
  }
  out.selection = select_features(*xt, *yt, names, plan);
  const Eigen::MatrixXd xs = take_cols(*xt, out.selection.columns);
  GridResult g = grid_search_cv(xs, *yt, spec_for(family, plan, derive_seed(seed, 2)), plan.k,
                                derive_seed(seed, 3), out.selection.names, jobs);
  out.model = std::move(g.model);
  out.cv_f1 = g.mean_f1;
  return out;
}

std::vector<stats::FeatureScore> selected_prefix(const stats::RankedFeatures& r) {
  return {r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(r.selected_k)};
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Eigen::VectorXi target_of(const FeatureMatrix& m, const ExperimentPlan& plan) {
  return plan.at_risk_target() ? m.at_risk : m.distinction;
}

Selection select_features(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const std::vector<std::string>& names,
                          const ExperimentPlan& plan) {
  stats::ElbowOptions opts = plan.elbow;
  if (plan.top_k) opts.override_k = plan.top_k;
  Selection s;
  s.ranking = stats::chi2_scores(x, as_span(y), names, opts);
  std::size_t positive = 0;
  for (const auto& f : s.ranking.ranking) positive += f.score > 0;
  if (positive == 0) throw DataError("no feature carries any chi-squared signal");
  s.ranking.selected_k = std::min(s.ranking.selected_k, positive);
  for (const auto& n : s.ranking.selected()) {
    const auto it = std::find(names.begin(), names.end(), n);
    s.columns.push_back(static_cast<Eigen::Index>(it - names.begin()));
    s.names.push_back(n);
  }
  return s;
}

EvaluationReport same_class_eval(const ExperimentPlan& plan, const FeatureMatrix& data) {
  const auto start = std::chrono::steady_clock::now();
  plan.validate();
  const Eigen::VectorXi y = target_of(data, plan);
  if (plan.at_risk_target() && y.sum() < 5) throw DataError("fewer than 5 at-risk students in training data");
  const auto folds = stratified_kfold(as_span(y), plan.k, plan.seed);
  const auto families = families_of(plan.family);
  const auto k = static_cast<std::size_t>(plan.k);

  std::vector<std::vector<Eigen::Index>> train_idx(k), test_idx(k);
  for (std::size_t i = 0; i < folds.size(); ++i)
    for (std::size_t f = 0; f < k; ++f)
      (static_cast<std::size_t>(folds[i]) == f ? test_idx : train_idx)[f].push_back(static_cast<Eigen::Index>(i));

  struct Task {
    Confusion confusion;
    std::string point;
    std::vector<std::string> selected;
    std::optional<std::pair<std::size_t, std::size_t>> downsample;
  };
  std::vector<Task> tasks(families.size() * k);
  parallel_for(tasks.size(), plan.jobs, [&](std::size_t t) {
    const Family family = families[t / k];
    const std::size_t f = t % k;
    const Eigen::MatrixXd xtr = take_rows(data.values, train_idx[f]);
    const Eigen::VectorXi ytr = take_rows(y, train_idx[f]);
    Fitted fit = fit_cell(xtr, ytr, data.feature_names, plan, family, derive_seed(plan.seed, 100 + f), 1);
    const Eigen::MatrixXd xte = take_cols(take_rows(data.values, test_idx[f]), fit.selection.columns);
    const Eigen::VectorXi yte = take_rows(y, test_idx[f]);
    const Eigen::VectorXi pred = fit.model.predict(xte, fit.selection.names);
    tasks[t] = {confusion(as_span(yte), as_span(pred)), describe(fit.model.point), fit.selection.names,
                fit.downsample};
  });

  EvaluationReport r;
  r.plan = plan;
  r.target = plan.at_risk_target() ? "at_risk" : "distinction";
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    FamilyOutcome o;
    o.family = families[fi];
    double sum = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const Task& t = tasks[fi * k + f];
      const double f1 = f1_score(t.confusion);
      o.fold_f1.push_back(f1);
      o.confusion += t.confusion;
      o.best_points.push_back(t.point);
      sum += f1;
    }
    o.f1 = sum / static_cast<double>(k);
    r.candidates.push_back(std::move(o));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.candidates.size(); ++i)
    if (r.candidates[i].f1 > r.candidates[best].f1) best = i;
  r.family = r.candidates[best].family;
  r.f1 = r.candidates[best].f1;
  r.fold_f1 = r.candidates[best].fold_f1;
  r.confusion = r.candidates[best].confusion;
  for (std::size_t f = 0; f < k; ++f) r.fold_selections.push_back(tasks[best * k + f].selected);
  if (plan.at_risk_target()) r.downsample = tasks[best * k].downsample;

  // Whole-class ranking, reported for comparison with per-class ranking tables only.
  const Selection whole = select_features(data.values, y, data.feature_names, plan);
  r.selected_features = selected_prefix(whole.ranking);
  r.timing_ms = elapsed_ms(start);
  return r;
}

namespace {

EvaluationReport transfer_impl(const ExperimentPlan& plan, const FeatureMatrix& train, const FeatureMatrix& test,
                               TrainedModel* model_out) {
  const auto start = std::chrono::steady_clock::now();
  plan.validate();
  if (train.feature_names != test.feature_names) {
    std::ostringstream msg;
    msg << "feature contract mismatch between train and test:";
    const std::set<std::string> a(train.feature_names.begin(), train.feature_names.end());
    const std::set<std::string> b(test.feature_names.begin(), test.feature_names.end());
    for (const auto& n : a)
      if (!b.contains(n)) msg << " train-only '" << n << "'";
    for (const auto& n : b)
      if (!a.contains(n)) msg << " test-only '" << n << "'";
    if (a == b) msg << " column order differs";
    throw ContractError(msg.str());
  }
  const Eigen::VectorXi ytr = target_of(train, plan);
  const Eigen::VectorXi yte = target_of(test, plan);
  if (plan.at_risk_target() && ytr.sum() < 5) throw DataError("fewer than 5 at-risk students in training data");

  const auto families = families_of(plan.family);
  std::vector<Fitted> fits(families.size());
  parallel_for(families.size(), plan.jobs, [&](std::size_t i) {
    fits[i] = fit_cell(train.values, ytr, train.feature_names, plan, families[i], plan.seed, 1);
  });

  EvaluationReport r;
  r.plan = plan;
  r.target = plan.at_risk_target() ? "at_risk" : "distinction";
  std::size_t best = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const Eigen::MatrixXd xte = take_cols(test.values, fits[i].selection.columns);
    const Eigen::VectorXi pred = fits[i].model.predict(xte, fits[i].selection.names);
    FamilyOutcome o;
    o.family = families[i];
    o.confusion = confusion(as_span(yte), as_span(pred));
    o.f1 = f1_score(o.confusion);
    o.fold_f1 = {o.f1};
    o.best_points = {describe(fits[i].model.point)};
    r.candidates.push_back(std::move(o));
    // Family choice uses training cross-validation only.
    if (fits[i].cv_f1 > fits[best].cv_f1) best = i;
  }
  r.family = families[best];
  r.f1 = r.candidates[best].f1;
  r.fold_f1 = r.candidates[best].fold_f1;
  r.confusion = r.candidates[best].confusion;
  r.selected_features = selected_prefix(fits[best].selection.ranking);
  r.downsample = fits[best].downsample;
  r.model_artifact = cell_name(plan) + ".model.json";
  if (yte.sum() == 0) r.warnings.push_back("test data has no positive cases: recall undefined, F1 recorded as 0");
  if (model_out) *model_out = std::move(fits[best].model);
  r.timing_ms = elapsed_ms(start);
  return r;
}

}  // namespace

EvaluationReport transfer_eval(const ExperimentPlan& plan, const FeatureMatrix& train, const FeatureMatrix& test,
                               TrainedModel* model_out) {
  return transfer_impl(plan, train, test, model_out);
}

EvaluationReport at_risk_eval(const ExperimentPlan& plan, const FeatureMatrix& train, const FeatureMatrix* test,
                              TrainedModel* model_out) {
  ExperimentPlan p = plan;
  p.mode = Mode::AtRisk;
  if (test) {
    if (!p.test) p.test = CellRef{test->course_id, test->slice};
    return transfer_impl(p, train, *test, model_out);
  }
  p.test.reset();
  return same_class_eval(p, train);
}

// ---------------------------------------------------------------- serialization

namespace {

ojson plan_json(const ExperimentPlan& p) {
  ojson j;
  j["mode"] = to_string(p.mode);
  j["train"] = {{"course", p.train.course}, {"slice", to_string(p.train.slice)}};
  j["test"] = p.test ? ojson{{"course", p.test->course}, {"slice", to_string(p.test->slice)}} : ojson(nullptr);
  j["family"] = to_string(p.family);
  j["graph_method"] = to_string(p.method);
  j["k"] = p.k;
  j["seed"] = p.seed;
  j["top_k"] = p.top_k ? ojson(*p.top_k) : ojson(nullptr);
  j["elbow_window"] = {p.elbow.window_begin, p.elbow.window_end};
  j["elbow_override"] = p.elbow.override_k ? ojson(*p.elbow.override_k) : ojson(nullptr);
  j["n_trees"] = p.n_trees;
  j["downsample_ratio"] = p.downsample_ratio;
  return j;
}

ExperimentPlan plan_from(const nlohmann::json& j) {
  ExperimentPlan p;
  p.mode = parse_mode(j.at("mode").get<std::string>());
  p.train = {j.at("train").at("course").get<std::string>(), parse_slice(j.at("train").at("slice").get<std::string>())};
  if (!j.at("test").is_null())
    p.test = CellRef{j.at("test").at("course").get<std::string>(),
                     parse_slice(j.at("test").at("slice").get<std::string>())};
  p.family = parse_family_choice(j.at("family").get<std::string>());
  p.method = parse_graph_method(j.at("graph_method").get<std::string>());
  p.k = j.at("k").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("top_k").is_null()) p.top_k = j.at("top_k").get<std::size_t>();
  p.elbow.window_begin = j.at("elbow_window").at(0).get<std::size_t>();
  p.elbow.window_end = j.at("elbow_window").at(1).get<std::size_t>();
  if (!j.at("elbow_override").is_null()) p.elbow.override_k = j.at("elbow_override").get<std::size_t>();
  p.n_trees = j.at("n_trees").get<int>();
  p.downsample_ratio = j.at("downsample_ratio").get<double>();
  return p;
}

ojson confusion_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

Confusion confusion_from(const nlohmann::json& j) {
  return {j.at("tp").get<long>(), j.at("fp").get<long>(), j.at("fn").get<long>(), j.at("tn").get<long>()};
}

}  // namespace

std::string report_json(const EvaluationReport& r) {
  ojson j;
  j["format"] = "cohortlens-report";
  j["version"] = 1;
  j["plan"] = plan_json(r.plan);
  j["target"] = r.target;
  j["family"] = to_string(r.family);
  j["f1"] = r.f1;
  j["fold_f1"] = r.fold_f1;
  j["confusion"] = confusion_json(r.confusion);
  ojson cands = ojson::array();
  for (const auto& c : r.candidates)
    cands.push_back({{"family", to_string(c.family)},
                     {"f1", c.f1},
                     {"fold_f1", c.fold_f1},
                     {"confusion", confusion_json(c.confusion)},
                     {"best_points", c.best_points}});
  j["candidates"] = std::move(cands);
  ojson sel = ojson::array();
  for (const auto& f : r.selected_features) sel.push_back({{"feature", f.name}, {"chi2", f.score}});
  j["selected_features"] = std::move(sel);
  j["fold_selections"] = r.fold_selections;
  j["downsample"] = r.downsample ? ojson{{"minority", r.downsample->first}, {"majority", r.downsample->second}}
                                 : ojson(nullptr);
  j["model_artifact"] = r.model_artifact;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

EvaluationReport report_from_json(std::string_view text) {
  EvaluationReport r;
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    if (j.at("format") != "cohortlens-report") throw SchemaError("format", "not a cohortlens report");
    r.plan = plan_from(j.at("plan"));
    r.target = j.at("target").get<std::string>();
    r.family = parse_family(j.at("family").get<std::string>());
    r.f1 = j.at("f1").get<double>();
    r.fold_f1 = j.at("fold_f1").get<std::vector<double>>();
    r.confusion = confusion_from(j.at("confusion"));
    for (const auto& c : j.at("candidates"))
      r.candidates.push_back({parse_family(c.at("family").get<std::string>()), c.at("f1").get<double>(),
                              c.at("fold_f1").get<std::vector<double>>(), confusion_from(c.at("confusion")),
                              c.at("best_points").get<std::vector<std::string>>()});
    for (const auto& f : j.at("selected_features"))
      r.selected_features.push_back({f.at("feature").get<std::string>(), f.at("chi2").get<double>()});
    r.fold_selections = j.at("fold_selections").get<std::vector<std::vector<std::string>>>();
    if (!j.at("downsample").is_null())
      r.downsample = std::make_pair(j.at("downsample").at("minority").get<std::size_t>(),
                                    j.at("downsample").at("majority").get<std::size_t>());
    r.model_artifact = j.at("model_artifact").get<std::string>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("report", std::string("report JSON: ") + e.what());
  }
  return r;
}

const std::vector<std::string>& report_csv_header() {
  static const std::vector<std::string> h = {"mode",        "train_course", "train_slice", "test_course",
                                             "test_slice",  "graph_method", "target",      "algorithm",
                                             "chosen",      "f1",           "tp",          "fp",
                                             "fn",          "tn",           "n_features"};
  return h;
}

std::string report_csv(const EvaluationReport& r) {
  std::ostringstream out;
  csv::write_record(out, report_csv_header());
  for (const auto& c : r.candidates) {
    csv::write_record(out, {std::string(to_string(r.plan.mode)), r.plan.train.course,
                            std::string(to_string(r.plan.train.slice)), r.plan.test ? r.plan.test->course : "",
                            r.plan.test ? std::string(to_string(r.plan.test->slice)) : "",
                            std::string(to_string(r.plan.method)), r.target, std::string(to_string(c.family)),
                            c.family == r.family ? "1" : "0", csv::format_number(c.f1), std::to_string(c.confusion.tp),
                            std::to_string(c.confusion.fp), std::to_string(c.confusion.fn),
                            std::to_string(c.confusion.tn), std::to_string(r.selected_features.size())});
  }
  return out.str();
}

void emit_report(const EvaluationReport& r, ReportFormat format, const std::filesystem::path& file) {
  write_text_file(file, format == ReportFormat::Json ? report_json(r) : report_csv(r));
}

// ---------------------------------------------------------------- correlation

std::vector<CorrelationRow> correlate_graph_features(const FeatureExtractor& extract) {
  std::vector<CorrelationRow> rows;
  for (Slice s : kAllSlices)
    for (GraphMethod m : {GraphMethod::A, GraphMethod::B}) {
      const FeatureMatrix fm = extract(s, m);
      CorrelationRow row{s, m, {}};
      for (std::size_t j = 0; j < GraphFeatureRow::kCount; ++j) {
        try {
          row.metrics[j] = stats::spearman(fm.values.col(static_cast<Eigen::Index>(j)), fm.grades);
        } catch (const Error&) {
          row.metrics[j] = std::nullopt;
        }
      }
      rows.push_back(row);
    }
  return rows;
}

std::string correlation_csv(const std::string& course_id, const std::vector<CorrelationRow>& rows) {
  std::ostringstream out;
  csv::Record header{"course", "slice", "method"};
  for (auto n : GraphFeatureRow::names()) {
    header.push_back(std::string(n) + "_rho");
    header.push_back(std::string(n) + "_p");
  }
  csv::write_record(out, header);
  for (const auto& r : rows) {
    csv::Record rec{course_id, std::string(to_string(r.slice)), std::string(to_string(r.method))};
    for (const auto& c : r.metrics) {
      rec.push_back(c ? csv::format_number(c->rho) : "nan");
      rec.push_back(c ? csv::format_number(c->p_value) : "nan");
    }
    csv::write_record(out, rec);
  }
  return out.str();
}

// ---------------------------------------------------------------- summary tables

std::string summary_tables_csv(const std::vector<EvaluationReport>& reports) {
  std::ostringstream out;
  // table -> row -> column -> value
  std::map<std::string, std::map<std::string, std::map<std::string, std::string>>> tables;
  std::map<std::string, std::set<std::string>> columns;
  for (const auto& r : reports) {
    const std::string table = std::string(to_string(r.plan.mode)) + " graph " + std::string(to_string(r.plan.method));
    if (!r.plan.test) {
      const std::string col = std::string(to_string(r.plan.train.slice));
      for (const auto& c : r.candidates) {
        const std::string row = r.plan.train.course + " " + std::string(to_string(c.family));
        tables[table][row][col] = csv::format_number(c.f1);
        columns[table].insert(col);
      }
    } else {
      const std::string row = r.plan.train.course + " " + std::string(to_string(r.plan.train.slice));
      const std::string col = r.plan.test->course + " " + std::string(to_string(r.plan.test->slice));
      tables[table][row][col] = csv::format_number(r.f1);
      columns[table].insert(col);
    }
  }
  bool first = true;
  for (const auto& [table, rows] : tables) {
    if (!first) out << '\n';
    first = false;
    csv::Record header{table};
    header.insert(header.end(), columns[table].begin(), columns[table].end());
    csv::write_record(out, header);
    for (const auto& [row, cells] : rows) {
      csv::Record rec{row};
      for (const auto& col : columns[table]) {
        auto it = cells.find(col);
        rec.push_back(it == cells.end() ? "" : it->second);
      }
      csv::write_record(out, rec);
    }
  }
  return out.str();
}

}  // namespace cohortlens
