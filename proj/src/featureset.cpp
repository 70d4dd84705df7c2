#include "cohortlens/featureset.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"

namespace cohortlens {

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (auto g : GraphFeatureRow::names()) n.emplace_back(g);
    for (auto kind : {SessionKind::Browser, SessionKind::Study})
      for (auto s : SessionFeatureRow::names()) n.push_back(std::string(s) + "_" + std::string(to_string(kind)));
    return n;
  }();
  return names;
}

bool FeatureMatrix::operator==(const FeatureMatrix& o) const {
  return course_id == o.course_id && slice == o.slice && graph_method == o.graph_method &&
         feature_names == o.feature_names && student_ids == o.student_ids &&
         values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values &&
         grades == o.grades && distinction == o.distinction && at_risk == o.at_risk;
}

std::map<std::string, Labels> label(const CourseConfig& config) {
  std::map<std::string, Labels> out;
  for (const auto& [id, grade] : config.roster) {
    if (!grade) throw DataError("student '" + id + "' has no final grade");
    out[id] = Labels{*grade >= config.distinction_threshold, *grade < config.at_risk_threshold};
  }
  return out;
}

namespace {

template <typename Row>
std::map<std::string_view, const Row*> index_rows(std::span<const Row> rows, const char* what) {
  std::map<std::string_view, const Row*> idx;
  for (const auto& r : rows)
    if (!idx.emplace(r.student_id, &r).second)
      throw ContractError(std::string("duplicate student '") + r.student_id + "' in " + what + " rows");
  return idx;
}

}  // namespace

FeatureMatrix assemble(std::span<const SessionFeatureRow> browser, std::span<const SessionFeatureRow> study,
                       std::span<const GraphFeatureRow> graph, const CourseConfig& config, Slice slice,
                       GraphMethod method) {
  const auto b_idx = index_rows(browser, "browser-session");
  const auto s_idx = index_rows(study, "study-session");
  const auto g_idx = index_rows(graph, "graph");
  const auto labels = label(config);

  FeatureMatrix m;
  m.course_id = config.course_id;
  m.slice = slice;
  m.graph_method = method;
  m.feature_names = feature_names();
  const auto n = static_cast<Eigen::Index>(config.roster.size());
  const auto p = static_cast<Eigen::Index>(m.feature_names.size());
  m.values = Eigen::MatrixXd::Zero(n, p);
  m.grades.resize(n);
  m.distinction.resize(n);
  m.at_risk.resize(n);

  Eigen::Index i = 0;
  for (const auto& [id, grade] : config.roster) {
    m.student_ids.push_back(id);
    m.grades[i] = *grade;
    const Labels& l = labels.at(id);
    m.distinction[i] = l.distinction;
    m.at_risk[i] = l.at_risk;
    Eigen::Index col = 0;
    if (auto it = g_idx.find(id); it != g_idx.end())
      for (double v : it->second->values()) m.values(i, col++) = v;
    col = GraphFeatureRow::kCount;
    if (auto it = b_idx.find(id); it != b_idx.end())
      for (double v : it->second->values()) m.values(i, col++) = v;
    col = GraphFeatureRow::kCount + SessionFeatureRow::kCount;
    if (auto it = s_idx.find(id); it != s_idx.end())
      for (double v : it->second->values()) m.values(i, col++) = v;
    ++i;
  }
  return m;
}

FeatureExtractor::FeatureExtractor(const CourseData& course)
    : course_(course),
      browser_(segment(course.log, SessionKind::Browser)),
      study_(segment(course.log, SessionKind::Study)) {
  for (const auto& [id, grade] : course.config.roster) roster_.push_back(id);
}

FeatureMatrix FeatureExtractor::operator()(Slice slice, GraphMethod method) const {
  const TimeWindow window = course_.window(slice);
  const auto browser = session_features(browser_, window, roster_);
  const auto study = session_features(study_, window, roster_);
  const SocialGraph g = build_graph(course_.threads, window, method);
  const auto graph = graph_features(g, roster_);
  return assemble(browser, study, graph, course_.config, slice, method);
}

FeatureMatrix extract_features(const CourseData& course, Slice slice, GraphMethod method) {
  return FeatureExtractor(course)(slice, method);
}

std::string feature_matrix_csv(const FeatureMatrix& m) {
  std::ostringstream out;
  csv::Record header{"student_id"};
  header.insert(header.end(), m.feature_names.begin(), m.feature_names.end());
  header.insert(header.end(), {"grade", "distinction", "at_risk"});
  csv::write_record(out, header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    csv::Record rec{m.student_ids[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) rec.push_back(csv::format_number(m.values(i, j)));
    rec.push_back(csv::format_number(m.grades[i]));
    rec.push_back(std::to_string(m.distinction[i]));
    rec.push_back(std::to_string(m.at_risk[i]));
    csv::write_record(out, rec);
  }
  return out.str();
}

std::string feature_matrix_metadata(const FeatureMatrix& m) {
  nlohmann::ordered_json j;
  j["course"] = m.course_id;
  j["slice"] = to_string(m.slice);
  j["method"] = to_string(m.graph_method);
  j["version"] = kFeatureSchemaVersion;
  j["feature_names"] = m.feature_names;
  j["rows"] = m.rows();
  return j.dump(2) + "\n";
}

FeatureMatrix parse_feature_matrix(std::string_view csv_text, std::string_view metadata_json) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(metadata_json.begin(), metadata_json.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("feature metadata: ") + e.what());
  }
  FeatureMatrix m;
  try {
    if (meta.at("version").get<int>() != kFeatureSchemaVersion)
      throw SchemaError("version", "unsupported feature schema version");
    m.course_id = meta.at("course").get<std::string>();
    m.slice = parse_slice(meta.at("slice").get<std::string>());
    m.graph_method = parse_graph_method(meta.at("method").get<std::string>());
    m.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("metadata", std::string("feature metadata: ") + e.what());
  }

  const auto records = csv::parse(csv_text);
  if (records.empty()) throw SchemaError("header", "feature CSV is empty");
  const auto p = m.feature_names.size();
  const auto& header = records.front();
  if (header.size() != p + 4 || !std::equal(m.feature_names.begin(), m.feature_names.end(), header.begin() + 1))
    throw SchemaError("header", "feature CSV header does not match the metadata feature names");

  const auto n = static_cast<Eigen::Index>(records.size() - 1);
  m.values.resize(n, static_cast<Eigen::Index>(p));
  m.grades.resize(n);
  m.distinction.resize(n);
  m.at_risk.resize(n);
  const auto num = [](const std::string& s, std::size_t row) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw RowError("invalid number '" + s + "'", row);
    return v;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i) + 1;
    const auto& rec = records[row];
    if (rec.size() != p + 4) throw RowError("wrong field count", row);
    m.student_ids.push_back(rec[0]);
    for (std::size_t j = 0; j < p; ++j) m.values(i, static_cast<Eigen::Index>(j)) = num(rec[j + 1], row);
    m.grades[i] = num(rec[p + 1], row);
    m.distinction[i] = static_cast<int>(num(rec[p + 2], row));
    m.at_risk[i] = static_cast<int>(num(rec[p + 3], row));
  }
  return m;
}

}  // namespace cohortlens
