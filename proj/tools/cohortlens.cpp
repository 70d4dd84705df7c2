#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"
#include "cohortlens/featureset.hpp"
#include "cohortlens/harness.hpp"
#include "cohortlens/log.hpp"
#include "cohortlens/manifest.hpp"
#include "cohortlens/parallel.hpp"
#include "cohortlens/synthcohort.hpp"

namespace fs = std::filesystem;
using namespace cohortlens;

namespace {

struct Options {
  std::vector<std::string> configs;
  std::string test_config;
  std::string slice = "full";
  std::string train_slice;
  std::string method = "a";
  std::string model;
  std::string target = "distinction";
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string out;
  int k = 5;
  int n_trees = 100;
  std::size_t top_k = 0;
  double ratio = 2.0;
  bool all = false;
  bool cross_course = false;
  std::string scores_file;
  std::size_t students = 500;
  std::string course_id = "SYN-1";
  bool invert = false;
  std::vector<std::string> report_dirs;
};

GraphMethod method_of(const Options& o) { return parse_graph_method(o.method); }
Slice slice_of(const std::string& s) { return parse_slice(s); }

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  return o.out;
}

RunManifest manifest_for(const std::string& command, const Options& o, std::vector<std::string> args) {
  RunManifest m;
  m.command = command;
  m.arguments = std::move(args);
  m.seeds["seed"] = o.seed;
  m.output_dir = fs::path(o.out).generic_string();
  return m;
}

void add_course_inputs(RunManifest& m, const fs::path& config_file) {
  m.add_config(config_file);
  const CourseConfig c = read_course_config(config_file);
  m.add_input(c.roster_path);
  if (c.forum_path) m.add_input(*c.forum_path);
  for (const auto& [platform, path] : c.clickstreams) m.add_input(path);
}

const std::string& single_config(const Options& o) {
  if (o.configs.size() != 1) throw UsageError("exactly one --config is required");
  return o.configs.front();
}

ExperimentPlan base_plan(const Options& o) {
  ExperimentPlan p;
  p.family = o.model.empty() ? FamilyChoice::Best : parse_family_choice(o.model);
  p.method = method_of(o);
  p.k = o.k;
  p.seed = o.seed;
  if (o.top_k > 0) p.top_k = o.top_k;
  p.n_trees = o.n_trees;
  p.downsample_ratio = o.ratio;
  p.jobs = resolve_jobs(o.jobs);
  return p;
}

void write_cell(const EvaluationReport& r, const fs::path& dir) {
  const std::string stem = cell_name(r.plan);
  emit_report(r, ReportFormat::Json, dir / (stem + ".json"));
  emit_report(r, ReportFormat::Csv, dir / (stem + ".csv"));
  for (const auto& w : r.warnings) log::warn(stem, ": ", w);
  std::cout << stem << " f1=" << csv::format_number(r.f1) << " (" << to_string(r.family) << ")\n";
}

std::vector<std::string> plan_args(const Options& o) {
  return {"--slice=" + o.slice, "--method=" + o.method, "--model=" + (o.model.empty() ? "best" : o.model),
          "--seed=" + std::to_string(o.seed), "--k=" + std::to_string(o.k),
          "--n-trees=" + std::to_string(o.n_trees), "--top-k=" + std::to_string(o.top_k),
          "--target=" + o.target, "--ratio=" + csv::format_number(o.ratio)};
}

// ---------------------------------------------------------------- subcommands

void cmd_ingest(const Options& o) {
  const auto& cfg = single_config(o);
  const CourseData course = load_course(cfg);
  std::size_t off_roster = 0;
  for (const auto& a : course.log.actions()) off_roster += a.off_roster;
  std::cout << course.config.course_id << ": " << course.config.roster.size() << " students, "
            << course.threads.threads.size() << " threads, " << course.threads.post_count() << " posts, "
            << course.log.size() << " actions (" << off_roster << " off roster)\n";
  if (o.out.empty()) return;
  const fs::path dir = out_dir(o);
  std::ostringstream log_csv;
  csv::write_record(log_csv, {"student_id", "timestamp", "platform", "action_kind", "detail", "off_roster"});
  for (const auto& a : course.log.actions())
    csv::write_record(log_csv, {a.student_id, format_iso8601(a.timestamp), std::string(to_string(a.platform)),
                                a.action_kind, a.detail.value_or(""), a.off_roster ? "1" : "0"});
  write_text_file(dir / "unified_log.csv", log_csv.str());
  write_text_file(dir / "threads.json", serialize_forum_export(course.threads));
  auto m = manifest_for("ingest", o, {});
  add_course_inputs(m, cfg);
  write_manifest(m, dir);
}

void cmd_sessions(const Options& o) {
  const auto& cfg = single_config(o);
  const fs::path dir = out_dir(o);
  const CourseData course = load_course(cfg);
  const Slice slice = slice_of(o.slice);
  const TimeWindow window = course.window(slice);
  const auto roster = course.config.roster_ids();
  const std::vector<std::string> ids(roster.begin(), roster.end());
  for (SessionKind kind : {SessionKind::Browser, SessionKind::Study}) {
    const auto sessions = segment(course.log, kind);
    const std::string tag(to_string(kind));
    write_text_file(dir / ("sessions_" + tag + ".csv"), sessions_csv(sessions));
    std::ostringstream feats;
    csv::Record header{"student_id"};
    for (auto n : SessionFeatureRow::names()) header.emplace_back(n);
    csv::write_record(feats, header);
    for (const auto& row : session_features(sessions, window, ids)) {
      csv::Record rec{row.student_id};
      for (double v : row.values()) rec.push_back(csv::format_number(v));
      csv::write_record(feats, rec);
    }
    write_text_file(dir / ("session_features_" + tag + "_" + o.slice + ".csv"), feats.str());
    std::cout << tag << ": " << sessions.size() << " sessions\n";
  }
  auto m = manifest_for("sessions", o, {"--slice=" + o.slice});
  add_course_inputs(m, cfg);
  write_manifest(m, dir);
}

void cmd_graph(const Options& o) {
  const auto& cfg = single_config(o);
  const fs::path dir = out_dir(o);
  const CourseData course = load_course(cfg);
  const Slice slice = slice_of(o.slice);
  const SocialGraph g = build_graph(course.threads, course.window(slice), method_of(o));
  const std::string stem = "graph_" + o.method + "_" + o.slice;
  write_text_file(dir / (stem + ".csv"), graph_arcs_csv(g, o.slice));
  write_text_file(dir / (stem + ".json"), graph_summary_json(g, o.slice));
  std::cout << stem << ": " << g.node_count() << " nodes, " << g.arcs().size() << " arcs\n";
  auto m = manifest_for("graph", o, {"--slice=" + o.slice, "--method=" + o.method});
  add_course_inputs(m, cfg);
  write_manifest(m, dir);
}

void cmd_features(const Options& o) {
  const auto& cfg = single_config(o);
  const fs::path dir = out_dir(o);
  const CourseData course = load_course(cfg);
  const FeatureMatrix fm = extract_features(course, slice_of(o.slice), method_of(o));
  const std::string stem = "features_" + course.config.course_id + "_" + o.slice + "_" + o.method;
  write_text_file(dir / (stem + ".csv"), feature_matrix_csv(fm));
  write_text_file(dir / (stem + ".json"), feature_matrix_metadata(fm));
  std::cout << stem << ": " << fm.rows() << " students x " << fm.cols() << " features\n";
  auto m = manifest_for("features", o, {"--slice=" + o.slice, "--method=" + o.method});
  add_course_inputs(m, cfg);
  write_manifest(m, dir);
}

void cmd_rank(const Options& o) {
  stats::ElbowOptions elbow;
  if (o.top_k > 0) elbow.override_k = o.top_k;
  stats::RankedFeatures ranked;
  std::optional<std::string> cfg;
  if (!o.scores_file.empty()) {
    // Precomputed scores: CSV with header feature,score.
    const auto records = csv::parse(read_text_file(o.scores_file));
    if (records.empty() || records.front().size() < 2 || records.front()[0] != "feature" ||
        records.front()[1] != "score")
      throw SchemaError("score", "scores file needs header 'feature,score'");
    std::vector<std::string> names;
    std::vector<double> scores;
    for (std::size_t i = 1; i < records.size(); ++i) {
      if (records[i].size() < 2) throw RowError("row " + std::to_string(i) + ": expected feature,score", i);
      names.push_back(records[i][0]);
      try {
        scores.push_back(std::stod(records[i][1]));
      } catch (const std::exception&) {
        throw RowError("row " + std::to_string(i) + ": score '" + records[i][1] + "' is not a number", i);
      }
    }
    ranked = stats::rank_features(scores, names, elbow);
  } else {
    cfg = single_config(o);
    const CourseData course = load_course(*cfg);
    const FeatureMatrix fm = extract_features(course, slice_of(o.slice), method_of(o));
    if (!elbow.override_k && course.config.feature_count) elbow.override_k = course.config.feature_count;
    const Eigen::VectorXi y = o.target == "at_risk" ? fm.at_risk : fm.distinction;
    ranked = stats::chi2_scores(fm.values, {y.data(), static_cast<std::size_t>(y.size())}, fm.feature_names,
                                elbow);
  }
  if (ranked.warning) log::warn("no distinct drop in scores; cutoff k=", ranked.selected_k);
  std::cout << "selected " << ranked.selected_k << " features\n";
  if (o.out.empty()) return;
  const fs::path dir = out_dir(o);
  std::ostringstream out;
  csv::write_record(out, {"rank", "feature", "chi2", "selected"});
  for (std::size_t i = 0; i < ranked.ranking.size(); ++i)
    csv::write_record(out, {std::to_string(i + 1), ranked.ranking[i].name,
                            csv::format_number(ranked.ranking[i].score), i < ranked.selected_k ? "1" : "0"});
  write_text_file(dir / "ranking.csv", out.str());
  auto m = manifest_for("rank", o, {"--slice=" + o.slice, "--method=" + o.method, "--target=" + o.target,
                                    "--top-k=" + std::to_string(o.top_k)});
  if (cfg) add_course_inputs(m, *cfg);
  else m.add_input(o.scores_file);
  write_manifest(m, dir);
}

void cmd_correlate(const Options& o) {
  const fs::path dir = out_dir(o);
  if (o.configs.empty()) throw UsageError("--config is required");
  auto m = manifest_for("correlate", o, {});
  for (const auto& cfg : o.configs) {
    const CourseData course = load_course(cfg);
    const FeatureExtractor extract(course);
    const auto rows = correlate_graph_features(extract);
    write_text_file(dir / ("correlation_" + course.config.course_id + ".csv"),
                    correlation_csv(course.config.course_id, rows));
    add_course_inputs(m, cfg);
  }
  write_manifest(m, dir);
}

void cmd_train(const Options& o) {
  const auto& cfg = single_config(o);
  const fs::path dir = out_dir(o);
  const CourseData course = load_course(cfg);
  const FeatureMatrix fm = extract_features(course, slice_of(o.slice), method_of(o));
  ExperimentPlan plan = base_plan(o);
  plan.mode = o.target == "at_risk" ? Mode::AtRisk : Mode::CrossOffering;
  plan.train = {fm.course_id, fm.slice};
  plan.test = CellRef{fm.course_id + "#train", fm.slice};
  TrainedModel model;
  EvaluationReport r = transfer_eval(plan, fm, fm, &model);
  write_text_file(dir / r.model_artifact, model_to_json(model));
  write_cell(r, dir);
  auto m = manifest_for("train", o, plan_args(o));
  add_course_inputs(m, cfg);
  write_manifest(m, dir);
}

void cmd_evaluate(const Options& o) {
  const fs::path dir = out_dir(o);
  if (o.configs.empty()) throw UsageError("--config is required");
  std::vector<EvaluationReport> reports;
  auto m = manifest_for("evaluate", o, plan_args(o));
  for (const auto& cfg : o.configs) {
    const CourseData course = load_course(cfg);
    const FeatureExtractor extract(course);
    std::vector<Slice> slices = {slice_of(o.slice)};
    std::vector<GraphMethod> methods = {method_of(o)};
    std::vector<FamilyChoice> models = {o.model.empty() ? FamilyChoice::Best : parse_family_choice(o.model)};
    if (o.all) {
      slices.assign(std::begin(kAllSlices), std::end(kAllSlices));
      methods = {GraphMethod::A, GraphMethod::B};
      models = {FamilyChoice::Logistic, FamilyChoice::Forest};
    }
    for (Slice s : slices)
      for (GraphMethod gm : methods) {
        const FeatureMatrix fm = extract(s, gm);
        for (FamilyChoice f : models) {
          ExperimentPlan plan = base_plan(o);
          plan.mode = o.target == "at_risk" ? Mode::AtRisk : Mode::SameClass;
          plan.method = gm;
          plan.family = f;
          plan.train = {fm.course_id, s};
          if (!plan.top_k && course.config.feature_count) plan.top_k = course.config.feature_count;
          const EvaluationReport r =
              plan.mode == Mode::AtRisk ? at_risk_eval(plan, fm) : same_class_eval(plan, fm);
          write_cell(r, dir);
          reports.push_back(r);
        }
      }
    add_course_inputs(m, cfg);
  }
  write_text_file(dir / "summary.csv", summary_tables_csv(reports));
  write_manifest(m, dir);
}

void cmd_transfer(const Options& o, bool at_risk) {
  const auto& cfg = single_config(o);
  const fs::path dir = out_dir(o);
  const CourseData train_course = load_course(cfg);
  const Slice test_slice = slice_of(o.slice);
  const Slice train_slice = o.train_slice.empty() ? test_slice : slice_of(o.train_slice);
  const FeatureMatrix train = extract_features(train_course, train_slice, method_of(o));
  auto m = manifest_for(at_risk ? "atrisk" : "transfer", o, plan_args(o));
  m.arguments.push_back("--train-slice=" + std::string(to_string(train_slice)));
  add_course_inputs(m, cfg);

  ExperimentPlan plan = base_plan(o);
  plan.train = {train.course_id, train_slice};
  TrainedModel model;
  EvaluationReport r;
  if (o.test_config.empty()) {
    if (!at_risk) throw UsageError("transfer needs --test-config");
    plan.mode = Mode::AtRisk;
    r = at_risk_eval(plan, train);
  } else {
    const CourseData test_course = load_course(o.test_config);
    const FeatureMatrix test = extract_features(test_course, test_slice, method_of(o));
    plan.mode = at_risk ? Mode::AtRisk : (o.cross_course ? Mode::CrossCourse : Mode::CrossOffering);
    plan.test = CellRef{test.course_id, test_slice};
    r = at_risk ? at_risk_eval(plan, train, &test, &model) : transfer_eval(plan, train, test, &model);
    write_text_file(dir / r.model_artifact, model_to_json(model));
    add_course_inputs(m, o.test_config);
  }
  if (r.downsample) log::info("training downsample: ", r.downsample->first, " minority, ", r.downsample->second,
                              " majority");
  write_cell(r, dir);
  write_manifest(m, dir);
}

void cmd_synth(const Options& o) {
  const fs::path dir = out_dir(o);
  CohortProfile p;
  p.seed = o.seed;
  p.n_students = o.students;
  p.course_id = o.course_id;
  p.invert_signal = o.invert;
  const SyntheticCourse course = generate(p);
  write_cohort(course, dir);
  std::cout << p.course_id << ": " << p.n_students << " students, " << course.action_count << " actions, "
            << course.threads.threads.size() << " threads\n";
  auto m = manifest_for("synth", o,
                        {"--students=" + std::to_string(o.students), "--course-id=" + o.course_id,
                         std::string("--invert=") + (o.invert ? "1" : "0")});
  write_manifest(m, dir);
}

void cmd_report(const Options& o) {
  const fs::path dir = out_dir(o);
  if (o.report_dirs.empty()) throw UsageError("report needs at least one input directory");
  std::vector<fs::path> files;
  for (const auto& d : o.report_dirs)
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != kManifestName)
        files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<EvaluationReport> reports;
  auto m = manifest_for("report", o, {});
  for (const auto& f : files) {
    const std::string text = read_text_file(f);
    if (text.find("\"cohortlens-report\"") == std::string::npos) continue;
    reports.push_back(report_from_json(text));
    m.add_input(f);
  }
  write_text_file(dir / "summary.csv", summary_tables_csv(reports));
  std::cout << reports.size() << " reports summarized\n";
  write_manifest(m, dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cohortlens: course engagement analytics and performance prediction"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::string> slices = {"t1", "t2", "full"};
  const auto add_config = [&](CLI::App* c, bool many) {
    auto* opt = c->add_option("--config", o.configs, "course configuration file")->check(CLI::ExistingFile);
    if (!many) opt->expected(1);
  };
  const auto add_out = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--out", o.out, "output directory");
    if (required) opt->required();
  };
  const auto add_slice = [&](CLI::App* c) {
    c->add_option("--slice", o.slice, "time slice")->check(CLI::IsMember(slices));
  };
  const auto add_method = [&](CLI::App* c) {
    c->add_option("--method", o.method, "forum graph construction")
        ->check(CLI::IsMember({"a", "b"}, CLI::ignore_case))
        ->transform([](std::string s) {
          for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
          return s;
        });
  };
  const auto add_learning = [&](CLI::App* c) {
    c->add_option("--model", o.model, "model family (default: best of both)")
        ->check(CLI::IsMember({"logistic", "forest"}));
    c->add_option("--seed", o.seed, "random seed");
    c->add_option("--jobs", o.jobs, "worker threads (0: all cores)");
    c->add_option("--k", o.k, "cross-validation folds");
    c->add_option("--n-trees", o.n_trees, "trees per forest");
    c->add_option("--top-k", o.top_k, "fixed feature count instead of the chi-squared elbow");
  };

  auto* ingest = app.add_subcommand("ingest", "validate and unify a course's inputs");
  add_config(ingest, false);
  add_out(ingest, false);

  auto* sessions = app.add_subcommand("sessions", "segment browser and study sessions");
  add_config(sessions, false);
  add_slice(sessions);
  add_out(sessions, true);

  auto* graph = app.add_subcommand("graph", "build the forum social graph");
  add_config(graph, false);
  add_slice(graph);
  add_method(graph);
  add_out(graph, true);

  auto* features = app.add_subcommand("features", "extract the per-student feature matrix");
  add_config(features, false);
  add_slice(features);
  add_method(features);
  add_out(features, true);

  auto* rank = app.add_subcommand("rank", "chi-squared feature ranking with elbow cutoff");
  add_config(rank, false);
  add_slice(rank);
  add_method(rank);
  rank->add_option("--scores", o.scores_file, "rank precomputed scores (CSV feature,score)")
      ->check(CLI::ExistingFile);
  rank->add_option("--top-k", o.top_k, "fixed feature count");
  rank->add_option("--target", o.target)->check(CLI::IsMember({"distinction", "at_risk"}));
  add_out(rank, false);

  auto* correlate = app.add_subcommand("correlate", "Spearman correlation of graph metrics with grades");
  add_config(correlate, true);
  add_out(correlate, true);

  auto* train = app.add_subcommand("train", "fit a model on one course and save it");
  add_config(train, false);
  add_slice(train);
  add_method(train);
  add_learning(train);
  train->add_option("--target", o.target)->check(CLI::IsMember({"distinction", "at_risk"}));
  train->add_option("--ratio", o.ratio, "majority:minority ratio for at-risk training");
  add_out(train, true);

  auto* evaluate = app.add_subcommand("evaluate", "same-class stratified cross-validation");
  add_config(evaluate, true);
  add_slice(evaluate);
  add_method(evaluate);
  add_learning(evaluate);
  evaluate->add_flag("--all", o.all, "every slice x method x model cell of every course");
  evaluate->add_option("--target", o.target)->check(CLI::IsMember({"distinction", "at_risk"}));
  evaluate->add_option("--ratio", o.ratio, "majority:minority ratio for at-risk training");
  add_out(evaluate, true);

  auto* transfer = app.add_subcommand("transfer", "train on one course, test on another");
  add_config(transfer, false);
  transfer->add_option("--test-config", o.test_config, "course to test on")->check(CLI::ExistingFile);
  add_slice(transfer);
  transfer->add_option("--train-slice", o.train_slice, "training slice (default: --slice)")
      ->check(CLI::IsMember(slices));
  transfer->add_flag("--cross-course", o.cross_course, "label as cross-course rather than cross-offering");
  add_method(transfer);
  add_learning(transfer);
  add_out(transfer, true);

  auto* atrisk = app.add_subcommand("atrisk", "at-risk prediction with majority downsampling");
  add_config(atrisk, false);
  atrisk->add_option("--test-config", o.test_config, "course to test on (default: cross-validation)")
      ->check(CLI::ExistingFile);
  add_slice(atrisk);
  atrisk->add_option("--train-slice", o.train_slice, "training slice (default: --slice)")
      ->check(CLI::IsMember(slices));
  add_method(atrisk);
  add_learning(atrisk);
  atrisk->add_option("--ratio", o.ratio, "majority:minority ratio");
  add_out(atrisk, true);

  auto* synth = app.add_subcommand("synth", "generate a synthetic course");
  synth->add_option("--seed", o.seed, "random seed");
  synth->add_option("--students", o.students, "number of students");
  synth->add_option("--course-id", o.course_id, "course identifier");
  synth->add_flag("--invert", o.invert, "invert the behavior-grade relation");
  synth->add_option("--jobs", o.jobs, "accepted for uniformity; generation is single-threaded");
  add_out(synth, true);

  auto* report = app.add_subcommand("report", "summary tables from evaluation directories");
  report->add_option("dirs", o.report_dirs, "directories holding cell reports")->check(CLI::ExistingDirectory);
  add_out(report, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCategory::Usage);
  }

  try {
    if (*ingest) cmd_ingest(o);
    else if (*sessions) cmd_sessions(o);
    else if (*graph) cmd_graph(o);
    else if (*features) cmd_features(o);
    else if (*rank) cmd_rank(o);
    else if (*correlate) cmd_correlate(o);
    else if (*train) cmd_train(o);
    else if (*evaluate) cmd_evaluate(o);
    else if (*transfer) cmd_transfer(o, false);
    else if (*atrisk) cmd_transfer(o, true);
    else if (*synth) cmd_synth(o);
    else if (*report) cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
