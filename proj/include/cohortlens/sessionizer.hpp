#pragma once

#include <array>
#include <chrono>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohortlens/ingest.hpp"

namespace cohortlens {

enum class SessionKind { Browser, Study };
enum class Homogeneity { Homogeneous, Heterogeneous };

std::string_view to_string(SessionKind k);  // "browser", "study"
std::string_view to_string(Homogeneity h);

/// Inactivity cutoff: a gap strictly longer than this starts a new session.
constexpr std::chrono::seconds session_cutoff(SessionKind kind) {
  return kind == SessionKind::Browser ? std::chrono::minutes{15} : std::chrono::minutes{40};
}

struct Session {
  std::string student_id;
  SessionKind kind = SessionKind::Browser;
  std::vector<UnifiedAction> actions;
  Timestamp start;
  Timestamp end;
  Homogeneity homogeneity = Homogeneity::Homogeneous;

  std::chrono::seconds duration() const { return end - start; }
  double duration_minutes() const { return static_cast<double>(duration().count()) / 60.0; }
};

/// Splits every student's actions at gaps > cutoff(kind). Output is ordered by student, then time.
std::vector<Session> segment(const UnifiedLog& log, SessionKind kind);

/// Per-student session statistics for one session kind and one time slice.
struct SessionFeatureRow {
  static constexpr std::size_t kCount = 14;

  std::string student_id;
  double num_sessions = 0;
  double avg_actions_per_session = 0;
  double total_actions = 0;
  double avg_duration = 0;  // minutes
  double total_time = 0;    // minutes
  double avg_gap = 0;       // minutes
  double inconsistency = 0;
  double num_homogeneous = 0;
  double pct_homogeneous = 0;
  double num_heterogeneous = 0;
  double pct_heterogeneous = 0;
  double piazza_ratio = 0;
  double piazza_questions = 0;
  double piazza_answers = 0;

  std::array<double, kCount> values() const;
  static const std::array<std::string_view, kCount>& names();
};

/// Largest per-student count of sessions starting inside `slice`.
std::size_t class_max_sessions(std::span<const Session> sessions, TimeWindow slice);

/// Features over the sessions that start inside `slice`. `sessions` must all be of one kind.
/// Rows are produced for every student with a session in the slice plus every id in
/// `include` (e.g. the roster), sorted by student id. Throws ContractError when a student
/// has more sessions than `class_max`.
std::vector<SessionFeatureRow> session_features(std::span<const Session> sessions, TimeWindow slice,
                                                std::size_t class_max,
                                                std::span<const std::string> include = {});

/// Convenience overload computing the class max over the same slice.
std::vector<SessionFeatureRow> session_features(std::span<const Session> sessions, TimeWindow slice,
                                                std::span<const std::string> include = {});

/// CSV: student_id,kind,start,end,n_actions,homogeneity
std::string sessions_csv(std::span<const Session> sessions);

}  // namespace cohortlens
