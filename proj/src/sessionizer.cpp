#include "cohortlens/sessionizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"

namespace cohortlens {

std::string_view to_string(SessionKind k) { return k == SessionKind::Browser ? "browser" : "study"; }

std::string_view to_string(Homogeneity h) {
  return h == Homogeneity::Homogeneous ? "homogeneous" : "heterogeneous";
}

namespace {

Session close_session(std::string student, SessionKind kind, std::vector<UnifiedAction> actions) {
  Session s;
  s.student_id = std::move(student);
  s.kind = kind;
  s.start = actions.front().timestamp;
  s.end = actions.back().timestamp;
  const Platform first = actions.front().platform;
  const bool mixed = std::any_of(actions.begin(), actions.end(),
                                 [first](const UnifiedAction& a) { return a.platform != first; });
  s.homogeneity = mixed ? Homogeneity::Heterogeneous : Homogeneity::Homogeneous;
  s.actions = std::move(actions);
  return s;
}

bool is_forum_contribution(const UnifiedAction& a) {
  return a.platform == Platform::Forum &&
         (a.action_kind == "post" || a.action_kind == "reply" || a.action_kind == "comment");
}

}  // namespace

std::vector<Session> segment(const UnifiedLog& log, SessionKind kind) {
  const auto cutoff = session_cutoff(kind);
  std::vector<Session> sessions;
  const auto& actions = log.actions();
  std::vector<UnifiedAction> current;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    if (!current.empty()) {
      const auto& prev = current.back();
      if (prev.student_id != a.student_id || a.timestamp - prev.timestamp > cutoff) {
        std::string id = current.front().student_id;
        sessions.push_back(close_session(std::move(id), kind, std::move(current)));
        current.clear();
      }
    }
    current.push_back(a);
  }
  if (!current.empty()) {
    std::string id = current.front().student_id;
    sessions.push_back(close_session(std::move(id), kind, std::move(current)));
  }
  return sessions;
}

std::array<double, SessionFeatureRow::kCount> SessionFeatureRow::values() const {
  return {num_sessions,     avg_actions_per_session, total_actions,    avg_duration,
          total_time,       avg_gap,                 inconsistency,    num_homogeneous,
          pct_homogeneous,  num_heterogeneous,       pct_heterogeneous, piazza_ratio,
          piazza_questions, piazza_answers};
}

const std::array<std::string_view, SessionFeatureRow::kCount>& SessionFeatureRow::names() {
  static const std::array<std::string_view, kCount> n = {
      "num_sessions",     "avg_actions_per_session", "total_actions",    "avg_duration",
      "total_time",       "avg_gap",                 "inconsistency",    "num_homogeneous",
      "pct_homogeneous",  "num_heterogeneous",       "pct_heterogeneous", "piazza_ratio",
      "piazza_questions", "piazza_answers"};
  return n;
}

std::size_t class_max_sessions(std::span<const Session> sessions, TimeWindow slice) {
  std::map<std::string_view, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& s : sessions)
    if (slice.contains(s.start)) best = std::max(best, ++counts[s.student_id]);
  return best;
}

std::vector<SessionFeatureRow> session_features(std::span<const Session> sessions, TimeWindow slice,
                                                std::size_t class_max,
                                                std::span<const std::string> include) {
  std::map<std::string, std::vector<const Session*>> by_student;
  for (const auto& id : include) by_student[id];
  for (const auto& s : sessions) {
    if (!sessions.empty() && s.kind != sessions.front().kind)
      throw ContractError("session_features expects sessions of a single kind");
    if (slice.contains(s.start)) by_student[s.student_id].push_back(&s);
  }

  std::vector<SessionFeatureRow> rows;
  rows.reserve(by_student.size());
  for (auto& [id, list] : by_student) {
    if (list.size() > class_max)
      throw ContractError("student '" + id + "' has " + std::to_string(list.size()) +
                          " sessions, above the supplied class max " + std::to_string(class_max));
    std::sort(list.begin(), list.end(),
              [](const Session* a, const Session* b) { return a->start < b->start; });

    SessionFeatureRow row;
    row.student_id = id;
    const auto n = list.size();
    row.num_sessions = static_cast<double>(n);

    std::size_t total_actions = 0, homogeneous = 0, with_forum = 0, questions = 0, answers = 0;
    std::chrono::seconds total_duration{0}, total_gap{0};
    for (std::size_t i = 0; i < n; ++i) {
      const Session& s = *list[i];
      total_actions += s.actions.size();
      total_duration += s.duration();
      if (s.homogeneity == Homogeneity::Homogeneous) ++homogeneous;
      bool forum = false;
      for (const auto& a : s.actions) {
        if (!is_forum_contribution(a)) continue;
        forum = true;
        if (a.action_kind == "post")
          ++questions;
        else
          ++answers;
      }
      if (forum) ++with_forum;
      if (i > 0) total_gap += s.start - list[i - 1]->end;
    }

    row.total_actions = static_cast<double>(total_actions);
    row.total_time = static_cast<double>(total_duration.count()) / 60.0;
    row.num_homogeneous = static_cast<double>(homogeneous);
    row.num_heterogeneous = static_cast<double>(n - homogeneous);
    row.piazza_questions = static_cast<double>(questions);
    row.piazza_answers = static_cast<double>(answers);
    if (n > 0) {
      const double dn = static_cast<double>(n);
      row.avg_actions_per_session = row.total_actions / dn;
      row.avg_duration = row.total_time / dn;
      row.pct_homogeneous = row.num_homogeneous / dn;
      row.pct_heterogeneous = row.num_heterogeneous / dn;
      row.piazza_ratio = static_cast<double>(with_forum) / dn;
    }
    row.avg_gap = n > 1 ? static_cast<double>(total_gap.count()) / 60.0 / static_cast<double>(n - 1)
                        : slice.length_minutes();
    row.inconsistency = row.avg_gap * static_cast<double>(class_max - n);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SessionFeatureRow> session_features(std::span<const Session> sessions, TimeWindow slice,
                                                std::span<const std::string> include) {
  return session_features(sessions, slice, class_max_sessions(sessions, slice), include);
}

std::string sessions_csv(std::span<const Session> sessions) {
  std::ostringstream out;
  csv::write_record(out, {"student_id", "kind", "start", "end", "n_actions", "homogeneity"});
  for (const auto& s : sessions)
    csv::write_record(out, {s.student_id, std::string(to_string(s.kind)), format_iso8601(s.start),
                            format_iso8601(s.end), std::to_string(s.actions.size()),
                            std::string(to_string(s.homogeneity))});
  return out.str();
}

}  // namespace cohortlens
