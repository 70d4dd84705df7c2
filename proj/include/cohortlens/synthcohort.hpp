#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cohortlens/ingest.hpp"

namespace cohortlens {

enum class GradeBand { Distinction, NonDistinction, AtRisk };
std::string_view to_string(GradeBand b);

/// Clickstream platforms the generator emits; forum activity goes to the forum export.
inline constexpr std::array<Platform, 4> kClickPlatforms = {Platform::LMS, Platform::Assignments, Platform::VCS,
                                                            Platform::CI};

struct BandBehavior {
  double sessions_per_week = 3;
  double bursts_per_session = 1.5;  // mean; bursts are 16-39 min apart
  double actions_per_burst = 4;     // mean; actions are 0.5-10 min apart
  double switch_prob = 0.3;         // per action, chance of leaving the burst's platform
  std::array<double, 4> platform_mix = {0.4, 0.3, 0.2, 0.1};  // over kClickPlatforms
  double questions_per_week = 0.3;
  double answers_per_week = 0.3;
  double comment_prob = 0.35;  // an answer annotates an earlier reply rather than the head
  double spike_sessions = 1;   // extra sessions in the days before each test
};

struct CohortProfile {
  std::string course_id = "SYN-1";
  std::size_t n_students = 500;
  std::uint64_t seed = 1;
  Timestamp start = Timestamp{std::chrono::seconds{1705276800}};  // 2024-01-15T00:00:00Z
  int semester_days = 105;
  int test1_day = 35;
  int test2_day = 70;
  int spike_days = 3;

  std::array<double, 3> band_mix = {0.45, 0.45, 0.10};  // indexed by GradeBand
  std::array<double, 3> band_grade = {95, 80, 60};
  double grade_noise_sd = 2.0;
  std::array<BandBehavior, 3> bands = default_bands();
  double individual_sd = 0.25;  // log-scale spread of per-student rate multipliers
  double weekly_sd = 0.2;       // log-scale week-to-week fluctuation of a student's session rate

  double short_gap_prob = 0.35;  // inter-session gaps: short (hours) or long (days)
  double short_gap_hours = 4;

  double partial_anonymous_prob = 0.03;
  double complete_anonymous_prob = 0.02;
  int n_staff = 3;
  double staff_reply_prob = 0.4;

  /// Students behave like the opposite band (distinction <-> at-risk) of their grade.
  bool invert_signal = false;

  static std::array<BandBehavior, 3> default_bands();
  /// Throws ConfigError on infeasible parameters.
  void validate() const;
};

struct SyntheticCourse {
  CourseConfig config;  // paths relative: roster.csv, forum.json, <platform>.csv
  ThreadSet threads;
  std::map<Platform, std::vector<UnifiedAction>> clickstreams;
  std::map<std::string, GradeBand> bands;
  std::size_t action_count = 0;  // clickstream actions plus forum posts by students

  /// In-memory equivalent of writing the files and calling load_course.
  CourseData course_data() const;
};

SyntheticCourse generate(const CohortProfile& profile);

/// Writes course.cfg, roster.csv, forum.json and one CSV per platform into `dir`.
/// Returns the config path.
std::filesystem::path write_cohort(const SyntheticCourse& course, const std::filesystem::path& dir);

}  // namespace cohortlens
