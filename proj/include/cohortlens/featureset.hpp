#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortlens/forum_graph.hpp"
#include "cohortlens/ingest.hpp"
#include "cohortlens/sessionizer.hpp"

namespace cohortlens {

/// Bumped whenever the column order or meaning changes.
inline constexpr int kFeatureSchemaVersion = 1;

/// 5 graph features, then the 14 session features for browser and then for study sessions.
const std::vector<std::string>& feature_names();

struct Labels {
  bool distinction = false;
  bool at_risk = false;
  bool operator==(const Labels&) const = default;
};

/// Per-student features for one course, slice and graph method. Rows are sorted by id.
struct FeatureMatrix {
  std::string course_id;
  Slice slice = Slice::Full;
  GraphMethod graph_method = GraphMethod::A;
  std::vector<std::string> feature_names;
  std::vector<std::string> student_ids;
  Eigen::MatrixXd values;  // rows = students, cols = features
  Eigen::VectorXd grades;
  Eigen::VectorXi distinction;
  Eigen::VectorXi at_risk;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool operator==(const FeatureMatrix& o) const;
};

/// distinction = grade >= distinction_threshold; at_risk = grade < at_risk_threshold.
/// Throws DataError naming the first student without a grade.
std::map<std::string, Labels> label(const CourseConfig& config);

/// Outer join on the roster: roster students missing from an input get zeros for that block;
/// non-roster ids are dropped. Throws ContractError on a duplicate id within any input.
FeatureMatrix assemble(std::span<const SessionFeatureRow> browser, std::span<const SessionFeatureRow> study,
                       std::span<const GraphFeatureRow> graph, const CourseConfig& config, Slice slice,
                       GraphMethod method);

/// Segments a course once and extracts feature matrices for any slice/method cell.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const CourseData& course);
  FeatureMatrix operator()(Slice slice, GraphMethod method) const;

 private:
  const CourseData& course_;
  std::vector<std::string> roster_;
  std::vector<Session> browser_;
  std::vector<Session> study_;
};

FeatureMatrix extract_features(const CourseData& course, Slice slice, GraphMethod method);

/// CSV: student_id, features..., grade, distinction, at_risk
std::string feature_matrix_csv(const FeatureMatrix& m);
/// JSON sidecar: course, slice, method, version, feature_names.
std::string feature_matrix_metadata(const FeatureMatrix& m);
/// Inverse of the two writers above.
FeatureMatrix parse_feature_matrix(std::string_view csv_text, std::string_view metadata_json);

}  // namespace cohortlens
