#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cohortlens/time.hpp"

namespace cohortlens {

enum class Platform { Forum, LMS, Assignments, VCS, CI };
enum class Role { Student, TA, Instructor };
enum class Anonymity { None, Partial, Complete };

std::string_view to_string(Platform p);
std::string_view to_string(Role r);
std::string_view to_string(Anonymity a);
Platform parse_platform(std::string_view s);  // case-insensitive
Role parse_role(std::string_view s);
Anonymity parse_anonymity(std::string_view s);

/// One timestamped student action on one platform.
struct UnifiedAction {
  std::string student_id;
  Timestamp timestamp;
  Platform platform = Platform::LMS;
  std::string action_kind;
  std::optional<std::string> detail;
  bool off_roster = false;  // student_id not found on the course roster

  bool operator==(const UnifiedAction&) const = default;
};

/// Ordering used by `unify`: student, time, platform name, action kind, then the rest.
bool unified_less(const UnifiedAction& a, const UnifiedAction& b);

struct Post {
  std::string post_id;
  std::optional<std::string> author_id;  // absent iff anonymity == Complete
  Role role = Role::Student;
  Timestamp timestamp;
  Anonymity anonymity = Anonymity::None;

  bool operator==(const Post&) const = default;
};

struct Reply {
  Post post;
  std::vector<Post> comments;

  bool operator==(const Reply&) const = default;
};

struct Thread {
  Post head;
  std::vector<Reply> replies;

  bool operator==(const Thread&) const = default;
};

struct ThreadSet {
  std::vector<Thread> threads;

  std::size_t post_count() const;
  bool operator==(const ThreadSet&) const = default;
};

// Forum export (JSON)

ThreadSet parse_forum_export(std::string_view json_text);
ThreadSet read_forum_export(const std::filesystem::path& file);
std::string serialize_forum_export(const ThreadSet& threads);

/// Checks author/anonymity consistency and timestamp ordering. Throws SchemaError / ValidationError.
void validate(const ThreadSet& threads);

/// Drops Complete-anonymous posts. A dropped reply takes its comments with it; a dropped
/// head drops the whole thread.
ThreadSet filter_anonymous(const ThreadSet& threads);

// Clickstream (CSV: student_id,timestamp,action_kind,detail)

/// `roster`, when given, is used to flag actions of students not on it.
std::vector<UnifiedAction> parse_clickstream(std::string_view csv_text, Platform platform,
                                             const std::set<std::string>* roster = nullptr);
std::vector<UnifiedAction> read_clickstream(const std::filesystem::path& file, Platform platform,
                                            const std::set<std::string>* roster = nullptr);
std::string serialize_clickstream(const std::vector<UnifiedAction>& actions);

/// Immutable, sorted transaction log for one course.
class UnifiedLog {
 public:
  UnifiedLog() = default;
  explicit UnifiedLog(std::vector<UnifiedAction> sorted_actions);

  const std::vector<UnifiedAction>& actions() const { return actions_; }
  std::size_t size() const { return actions_.size(); }
  bool empty() const { return actions_.empty(); }

 private:
  std::vector<UnifiedAction> actions_;
};

/// Forum posts become Forum actions (`post`, `reply`, `comment`); everything is merged and
/// sorted with `unified_less`.
UnifiedLog unify(const std::vector<std::vector<UnifiedAction>>& streams, const ThreadSet& threads,
                 const std::set<std::string>* roster = nullptr);

// Course configuration

enum class Slice { BeforeTest1, BeforeTest2, Full };
inline constexpr Slice kAllSlices[] = {Slice::BeforeTest1, Slice::BeforeTest2, Slice::Full};
std::string_view to_string(Slice s);       // "t1", "t2", "full"
Slice parse_slice(std::string_view s);     // accepts the short names and the enum names

struct CourseConfig {
  std::string course_id;
  std::optional<Timestamp> start_date;
  Timestamp test1_date;
  Timestamp test2_date;
  Timestamp end_date;
  double distinction_threshold = 90.0;
  double at_risk_threshold = 70.0;
  std::map<std::string, std::optional<double>> roster;  // student_id -> final grade

  // Input files, resolved against the config file's directory.
  std::filesystem::path roster_path;
  std::optional<std::filesystem::path> forum_path;
  std::map<Platform, std::filesystem::path> clickstreams;
  std::optional<std::size_t> feature_count;  // manual override of the elbow cutoff

  std::set<std::string> roster_ids() const;
  void validate() const;
};

/// `key = value` lines; `#` starts a comment. Keys:
///   course_id, start_date, test1_date, test2_date, end_date,
///   distinction_threshold, at_risk_threshold, roster, forum,
///   clickstream.<platform>, feature_count
/// `roster` names a CSV with header `student_id,grade`.
CourseConfig parse_course_config(std::string_view text, const std::filesystem::path& base_dir);
CourseConfig read_course_config(const std::filesystem::path& file);
std::string serialize_course_config(const CourseConfig& config);
std::map<std::string, std::optional<double>> parse_roster(std::string_view csv_text);
std::string serialize_roster(const std::map<std::string, std::optional<double>>& roster);

/// Window for a slice. The window opens at `start_date`, or at `fallback_start` when unset.
TimeWindow slice_window(const CourseConfig& config, Slice slice, Timestamp fallback_start);

/// Everything ingested for one course.
struct CourseData {
  CourseConfig config;
  ThreadSet threads;  // anonymity-filtered
  UnifiedLog log;

  Timestamp semester_start() const;
  TimeWindow window(Slice slice) const { return slice_window(config, slice, semester_start()); }
};

CourseData load_course(const std::filesystem::path& config_file);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, std::string_view contents);

}  // namespace cohortlens
