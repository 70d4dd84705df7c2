#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cohortlens/featureset.hpp"
#include "cohortlens/learner.hpp"
#include "cohortlens/stats.hpp"

namespace cohortlens {

enum class Mode { SameClass, CrossOffering, CrossCourse, AtRisk };
enum class FamilyChoice { Logistic, Forest, Best };

std::string_view to_string(Mode m);  // "same_class", "cross_offering", "cross_course", "at_risk"
Mode parse_mode(std::string_view s);
std::string_view to_string(FamilyChoice f);  // "logistic", "forest", "best"
FamilyChoice parse_family_choice(std::string_view s);

struct CellRef {
  std::string course;
  Slice slice = Slice::Full;
  bool operator==(const CellRef&) const = default;
};

struct ExperimentPlan {
  Mode mode = Mode::SameClass;
  CellRef train;
  std::optional<CellRef> test;  // none: cross-validation within `train`
  FamilyChoice family = FamilyChoice::Best;
  GraphMethod method = GraphMethod::A;
  int k = 5;
  std::uint64_t seed = 0;
  std::optional<std::size_t> top_k;  // fixed feature count; otherwise the chi-squared elbow
  stats::ElbowOptions elbow;
  int n_trees = 100;
  double downsample_ratio = 2.0;
  int jobs = 1;  // execution only; never affects results or the emitted report

  bool at_risk_target() const { return mode == Mode::AtRisk; }
  void validate() const;
  bool operator==(const ExperimentPlan& o) const;  // ignores `jobs`
};

struct FamilyOutcome {
  Family family = Family::Logistic;
  double f1 = 0;
  std::vector<double> fold_f1;
  Confusion confusion;
  std::vector<std::string> best_points;  // one per fold (or one for transfer)
  bool operator==(const FamilyOutcome&) const = default;
};

struct EvaluationReport {
  ExperimentPlan plan;
  std::string target;  // "distinction" or "at_risk"
  Family family = Family::Logistic;  // family the headline F1 comes from
  double f1 = 0;
  std::vector<double> fold_f1;
  Confusion confusion;
  std::vector<FamilyOutcome> candidates;
  std::vector<stats::FeatureScore> selected_features;     // training-data ranking, selected prefix
  std::vector<std::vector<std::string>> fold_selections;  // per outer fold (same-class only)
  std::optional<std::pair<std::size_t, std::size_t>> downsample;  // (minority kept, majority kept)
  std::string model_artifact;
  std::vector<std::string> warnings;
  double timing_ms = 0;  // wall time; not part of emitted reports

  bool operator==(const EvaluationReport& o) const;  // ignores timing_ms
};

/// Column indices of the selected features: chi-squared ranking on (x, y) with the plan's
/// elbow/top-k rule, never admitting zero-score features.
struct Selection {
  stats::RankedFeatures ranking;
  std::vector<Eigen::Index> columns;
  std::vector<std::string> names;
};
Selection select_features(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                          const std::vector<std::string>& names, const ExperimentPlan& plan);

/// Target column for the plan (distinction, or at_risk for Mode::AtRisk).
Eigen::VectorXi target_of(const FeatureMatrix& m, const ExperimentPlan& plan);

/// Outer stratified k-fold on one matrix. Feature selection, standardization, downsampling
/// (at-risk only) and the inner grid search all happen on each training split.
EvaluationReport same_class_eval(const ExperimentPlan& plan, const FeatureMatrix& data);

/// Everything is fit on `train`; a single F1 is measured on `test`. The family is chosen by
/// training cross-validation. `model_out` receives the chosen model.
EvaluationReport transfer_eval(const ExperimentPlan& plan, const FeatureMatrix& train, const FeatureMatrix& test,
                               TrainedModel* model_out = nullptr);

/// At-risk target with 2:1 (plan.downsample_ratio) majority downsampling of training data.
/// Transfer when `test` is given, otherwise cross-validation within `train`.
EvaluationReport at_risk_eval(const ExperimentPlan& plan, const FeatureMatrix& train,
                              const FeatureMatrix* test = nullptr, TrainedModel* model_out = nullptr);

enum class ReportFormat { Json, Csv };

std::string report_json(const EvaluationReport& r);
EvaluationReport report_from_json(std::string_view text);
/// One row per candidate family; columns listed by `report_csv_header()`.
std::string report_csv(const EvaluationReport& r);
const std::vector<std::string>& report_csv_header();
void emit_report(const EvaluationReport& r, ReportFormat format, const std::filesystem::path& file);

/// Stable file stem for a cell, e.g. `same_class_CS1-2024_full_A_best`.
std::string cell_name(const ExperimentPlan& plan);

// Spearman correlation of graph features with the final grade

struct CorrelationRow {
  Slice slice = Slice::Full;
  GraphMethod method = GraphMethod::A;
  std::array<std::optional<stats::Correlation>, GraphFeatureRow::kCount> metrics;  // nullopt: undefined
};

std::vector<CorrelationRow> correlate_graph_features(const FeatureExtractor& extract);
/// Rows = slice x method; columns = 5 metrics x (rho, p).
std::string correlation_csv(const std::string& course_id, const std::vector<CorrelationRow>& rows);

/// Pivot tables (one block per mode and graph method) built from a set of cell reports.
std::string summary_tables_csv(const std::vector<EvaluationReport>& reports);

}  // namespace cohortlens
