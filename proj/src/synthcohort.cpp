#include "cohortlens/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "cohortlens/error.hpp"

namespace cohortlens {

std::string_view to_string(GradeBand b) {
  switch (b) {
    case GradeBand::Distinction: return "distinction";
    case GradeBand::NonDistinction: return "non_distinction";
    case GradeBand::AtRisk: return "at_risk";
  }
  return "?";
}

std::array<BandBehavior, 3> CohortProfile::default_bands() {
  BandBehavior distinction;
  distinction.sessions_per_week = 5.0;
  distinction.bursts_per_session = 2.2;
  distinction.actions_per_burst = 5.0;
  distinction.switch_prob = 0.12;
  distinction.platform_mix = {0.35, 0.35, 0.2, 0.1};
  distinction.questions_per_week = 0.35;
  distinction.answers_per_week = 0.8;
  distinction.spike_sessions = 2.5;

  BandBehavior middle;
  middle.sessions_per_week = 3.2;
  middle.bursts_per_session = 1.6;
  middle.actions_per_burst = 4.0;
  middle.switch_prob = 0.3;
  middle.platform_mix = {0.45, 0.3, 0.15, 0.1};
  middle.questions_per_week = 0.3;
  middle.answers_per_week = 0.25;
  middle.spike_sessions = 1.5;

  BandBehavior at_risk;
  at_risk.sessions_per_week = 1.6;
  at_risk.bursts_per_session = 1.2;
  at_risk.actions_per_burst = 3.0;
  at_risk.switch_prob = 0.45;
  at_risk.platform_mix = {0.55, 0.3, 0.1, 0.05};
  at_risk.questions_per_week = 0.15;
  at_risk.answers_per_week = 0.05;
  at_risk.spike_sessions = 1.0;
  return {distinction, middle, at_risk};
}

void CohortProfile::validate() const {
  if (course_id.empty()) throw ConfigError("profile: course_id is empty");
  if (semester_days <= 0) throw ConfigError("profile: semester length must be positive");
  if (!(0 < test1_day && test1_day < test2_day && test2_day < semester_days))
    throw ConfigError("profile: need 0 < test1_day < test2_day < semester_days");
  if (spike_days < 0) throw ConfigError("profile: spike_days must be non-negative");
  const auto prob = [](double p, const char* what) {
    if (!(p >= 0 && p <= 1)) throw ConfigError(std::string("profile: ") + what + " must lie in [0, 1]");
  };
  const auto rate = [](double r, const char* what) {
    if (!(r >= 0) || !std::isfinite(r)) throw ConfigError(std::string("profile: ") + what + " must be >= 0");
  };
  const auto mix = [&](const auto& m, const char* what) {
    double s = 0;
    for (double v : m) prob(v, what), s += v;
    if (std::abs(s - 1) > 1e-9) throw ConfigError(std::string("profile: ") + what + " must sum to 1");
  };
  mix(band_mix, "band mix");
  for (double g : band_grade)
    if (!(g >= 0 && g <= 100)) throw ConfigError("profile: band grades must lie in [0, 100]");
  rate(grade_noise_sd, "grade noise sd");
  rate(individual_sd, "individual sd");
  rate(weekly_sd, "weekly sd");
  for (const auto& b : bands) {
    rate(b.sessions_per_week, "sessions per week");
    if (b.bursts_per_session < 1) throw ConfigError("profile: bursts per session must be >= 1");
    if (b.actions_per_burst < 1) throw ConfigError("profile: actions per burst must be >= 1");
    prob(b.switch_prob, "switch probability");
    mix(b.platform_mix, "platform mix");
    rate(b.questions_per_week, "questions per week");
    rate(b.answers_per_week, "answers per week");
    prob(b.comment_prob, "comment probability");
    rate(b.spike_sessions, "spike sessions");
  }
  prob(short_gap_prob, "short gap probability");
  if (!(short_gap_hours > 0)) throw ConfigError("profile: short gap hours must be positive");
  prob(partial_anonymous_prob, "partial anonymity probability");
  prob(complete_anonymous_prob, "complete anonymity probability");
  prob(partial_anonymous_prob + complete_anonymous_prob, "total anonymity probability");
  if (n_staff < 0) throw ConfigError("profile: n_staff must be non-negative");
  prob(staff_reply_prob, "staff reply probability");
}

namespace {

using std::chrono::seconds;
constexpr long kDay = 86400;
constexpr long kHour = 3600;
constexpr long kSessionSeparation = 45 * 60;  // above both inactivity cutoffs

const std::array<std::vector<std::string>, 4> kKinds = {{
    {"view", "download", "quiz"},  // LMS
    {"view", "submit"},            // Assignments
    {"commit", "push"},            // VCS
    {"build", "test"},             // CI
}};

struct StudentPlan {
  std::string id;
  GradeBand band;
  const BandBehavior* behavior;
  double m_sessions, m_bursts, m_questions, m_answers;
};

class Generator {
 public:
  explicit Generator(const CohortProfile& p) : p_(p), rng_(p.seed) {}

  SyntheticCourse run() {
    SyntheticCourse out;
    configure(out.config);
    const std::size_t width = std::max<std::size_t>(4, std::to_string(p_.n_students).size());
    std::discrete_distribution<int> band_pick(p_.band_mix.begin(), p_.band_mix.end());
    std::normal_distribution<double> noise(0.0, p_.grade_noise_sd);
    const double sd = p_.individual_sd;
    std::lognormal_distribution<double> mult(-sd * sd / 2, sd);

    std::vector<StudentPlan> students;
    for (std::size_t i = 0; i < p_.n_students; ++i) {
      std::ostringstream id;
      id << 's' << std::setw(static_cast<int>(width)) << std::setfill('0') << (i + 1);
      const auto band = static_cast<GradeBand>(band_pick(rng_));
      const double raw = p_.band_grade[static_cast<std::size_t>(band)] + noise(rng_);
      const double grade = std::clamp(std::round(raw * 10) / 10, 0.0, 100.0);
      out.config.roster[id.str()] = grade;
      out.bands[id.str()] = band;
      auto behaves = band;
      if (p_.invert_signal && band != GradeBand::NonDistinction)
        behaves = band == GradeBand::Distinction ? GradeBand::AtRisk : GradeBand::Distinction;
      const double ms = mult(rng_), mb = mult(rng_), mq = mult(rng_), ma = mult(rng_);
      students.push_back({id.str(), band, &p_.bands[static_cast<std::size_t>(behaves)], ms, mb, mq, ma});
    }

    times_.assign(students.size(), {});
    for (std::size_t s = 0; s < students.size(); ++s) simulate(students[s], times_[s], out);
    forum(students, out);
    for (auto& [platform, actions] : out.clickstreams) out.action_count += actions.size();
    return out;
  }

 private:
  void configure(CourseConfig& c) const {
    c.course_id = p_.course_id;
    c.start_date = p_.start;
    c.test1_date = at(p_.test1_day * kDay);
    c.test2_date = at(p_.test2_day * kDay);
    c.end_date = at(p_.semester_days * kDay);
    c.roster_path = "roster.csv";
    c.forum_path = "forum.json";
    for (Platform pl : kClickPlatforms) c.clickstreams[pl] = std::string(to_string(pl)) + ".csv";
  }

  Timestamp at(long offset) const { return p_.start + seconds{offset}; }
  long end() const { return p_.semester_days * kDay; }

  long uniform(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  int poisson(double mean) { return mean > 0 ? std::poisson_distribution<int>(mean)(rng_) : 0; }
  double exponential(double mean) { return std::exponential_distribution<double>(1.0 / mean)(rng_); }

  int pick_platform(const BandBehavior& b, int avoid = -1) {
    std::array<double, 4> w = b.platform_mix;
    if (avoid >= 0) w[static_cast<std::size_t>(avoid)] = 0;
    if (std::all_of(w.begin(), w.end(), [](double v) { return v <= 0; })) return avoid < 0 ? 0 : avoid;
    return std::discrete_distribution<int>(w.begin(), w.end())(rng_);
  }

  std::vector<long> session_starts(const StudentPlan& s) {
    const BandBehavior& b = *s.behavior;
    std::vector<long> starts;
    const double rate = b.sessions_per_week * s.m_sessions;
    if (rate > 0) {
      const double wsd = p_.weekly_sd;
      std::lognormal_distribution<double> weekly(-wsd * wsd / 2, wsd);
      std::vector<double> intensity(static_cast<std::size_t>(p_.semester_days / 7 + 1));
      for (double& w : intensity) w = weekly(rng_);
      const double short_mean = p_.short_gap_hours * kHour;
      long t = static_cast<long>(unit() * 168.0 / rate * kHour);
      while (t < end()) {
        starts.push_back(t);
        const double mean_gap = 168.0 / (rate * intensity[static_cast<std::size_t>(t / (7 * kDay))]) * kHour;
        double long_mean = (mean_gap - p_.short_gap_prob * short_mean) / (1 - p_.short_gap_prob + 1e-12);
        if (long_mean < short_mean) long_mean = mean_gap;
        const bool short_gap = unit() < p_.short_gap_prob;
        t += static_cast<long>(exponential(short_gap ? short_mean : long_mean)) + kSessionSeparation;
      }
    }
    for (int day : {p_.test1_day, p_.test2_day, p_.semester_days}) {
      const int extra = poisson(b.spike_sessions * s.m_sessions);
      const long lo = std::max(0L, (day - p_.spike_days) * kDay);
      for (int i = 0; i < extra; ++i) starts.push_back(uniform(lo, day * kDay - 1));
    }
    std::sort(starts.begin(), starts.end());
    return starts;
  }

  void simulate(const StudentPlan& s, std::vector<long>& times, SyntheticCourse& out) {
    const BandBehavior& b = *s.behavior;
    long prev_end = -kSessionSeparation;
    for (long candidate : session_starts(s)) {
      long t = std::max(candidate, prev_end + kSessionSeparation);
      if (t >= end()) break;
      const int bursts = 1 + poisson(b.bursts_per_session * s.m_bursts - 1);
      for (int k = 0; k < bursts; ++k) {
        if (k > 0) t += uniform(16 * 60 + 1, 39 * 60);
        const int platform = pick_platform(b);
        const int actions = 1 + poisson(b.actions_per_burst * s.m_bursts - 1);
        for (int a = 0; a < actions; ++a) {
          if (a > 0) t += uniform(30, 600);
          if (t >= end()) break;
          const int here = unit() < b.switch_prob ? pick_platform(b, platform) : platform;
          const auto& kinds = kKinds[static_cast<std::size_t>(here)];
          UnifiedAction act;
          act.student_id = s.id;
          act.timestamp = at(t);
          act.platform = kClickPlatforms[static_cast<std::size_t>(here)];
          act.action_kind = kinds[static_cast<std::size_t>(uniform(0, static_cast<long>(kinds.size()) - 1))];
          out.clickstreams[act.platform].push_back(std::move(act));
          times.push_back(t);
        }
      }
      prev_end = t;
    }
  }

  Post student_post(const std::string& author, long t) {
    Post p;
    p.post_id = "p" + std::to_string(++next_post_);
    p.role = Role::Student;
    p.timestamp = at(t);
    const double u = unit();
    if (u < p_.complete_anonymous_prob) {
      p.anonymity = Anonymity::Complete;
    } else {
      p.author_id = author;
      if (u < p_.complete_anonymous_prob + p_.partial_anonymous_prob) p.anonymity = Anonymity::Partial;
    }
    return p;
  }

  void forum(const std::vector<StudentPlan>& students, SyntheticCourse& out) {
    const double weeks = p_.semester_days / 7.0;
    struct Open {
      long time;
      std::size_t thread;
      std::size_t asker;
    };
    std::vector<Open> opened;
    std::vector<Thread>& threads = out.threads.threads;
    std::vector<long> head_time;

    // Questions open threads at moments the asker was active.
    for (std::size_t s = 0; s < students.size(); ++s) {
      if (times_[s].empty()) continue;
      const int n = poisson(students[s].behavior->questions_per_week * weeks * students[s].m_questions);
      for (int i = 0; i < n; ++i) {
        const long t = times_[s][static_cast<std::size_t>(uniform(0, static_cast<long>(times_[s].size()) - 1))];
        Thread th;
        th.head = student_post(students[s].id, t);
        opened.push_back({t, threads.size(), s});
        threads.push_back(std::move(th));
        ++out.action_count;
      }
    }
    std::sort(opened.begin(), opened.end(), [](const Open& a, const Open& b) {
      return std::tie(a.time, a.thread) < std::tie(b.time, b.thread);
    });
    for (const auto& o : opened) head_time.push_back(o.time);

    // Answers go to recently opened threads of other students.
    constexpr std::size_t kRecent = 20;
    for (std::size_t s = 0; s < students.size(); ++s) {
      if (times_[s].empty()) continue;
      const BandBehavior& b = *students[s].behavior;
      const int n = poisson(b.answers_per_week * weeks * students[s].m_answers);
      for (int i = 0; i < n; ++i) {
        const long t = times_[s][static_cast<std::size_t>(uniform(0, static_cast<long>(times_[s].size()) - 1))];
        const auto hi = static_cast<std::size_t>(std::lower_bound(head_time.begin(), head_time.end(), t) -
                                                 head_time.begin());
        std::vector<std::size_t> pool;
        for (std::size_t j = hi; j > 0 && pool.size() < kRecent; --j)
          if (opened[j - 1].asker != s) pool.push_back(opened[j - 1].thread);
        if (pool.empty()) continue;
        Thread& th = threads[pool[static_cast<std::size_t>(uniform(0, static_cast<long>(pool.size()) - 1))]];
        std::vector<std::size_t> earlier;
        for (std::size_t r = 0; r < th.replies.size(); ++r)
          if (th.replies[r].post.timestamp <= at(t)) earlier.push_back(r);
        Post post = student_post(students[s].id, t);
        if (!earlier.empty() && unit() < b.comment_prob) {
          const std::size_t r = earlier[static_cast<std::size_t>(uniform(0, static_cast<long>(earlier.size()) - 1))];
          th.replies[r].comments.push_back(std::move(post));
        } else {
          th.replies.push_back({std::move(post), {}});
        }
        ++out.action_count;
      }
    }

    // Staff answers.
    for (auto& th : threads) {
      if (p_.n_staff == 0 || unit() >= p_.staff_reply_prob) continue;
      const long who = uniform(0, p_.n_staff - 1);
      Post post;
      post.post_id = "p" + std::to_string(++next_post_);
      post.author_id = (who == 0 ? "instructor" : "ta") + std::to_string(who == 0 ? 1 : who);
      post.role = who == 0 ? Role::Instructor : Role::TA;
      post.timestamp = th.head.timestamp + seconds{uniform(kHour / 2, 36 * kHour)};
      th.replies.push_back({std::move(post), {}});
    }

    const auto by_time = [](const Post& a, const Post& b) { return a.timestamp < b.timestamp; };
    for (auto& th : threads) {
      std::stable_sort(th.replies.begin(), th.replies.end(),
                       [&](const Reply& a, const Reply& b) { return by_time(a.post, b.post); });
      for (auto& r : th.replies) std::stable_sort(r.comments.begin(), r.comments.end(), by_time);
    }
    std::stable_sort(threads.begin(), threads.end(),
                     [&](const Thread& a, const Thread& b) { return by_time(a.head, b.head); });
  }

  const CohortProfile& p_;
  std::mt19937_64 rng_;
  std::vector<std::vector<long>> times_;
  long next_post_ = 0;
};

}  // namespace

SyntheticCourse generate(const CohortProfile& profile) {
  profile.validate();
  return Generator(profile).run();
}

CourseData SyntheticCourse::course_data() const {
  CourseData data;
  data.config = config;
  const auto roster = config.roster_ids();
  data.threads = filter_anonymous(threads);
  std::vector<std::vector<UnifiedAction>> streams;
  for (Platform p : kClickPlatforms) {
    auto it = clickstreams.find(p);
    streams.push_back(it == clickstreams.end() ? std::vector<UnifiedAction>{} : it->second);
  }
  data.log = unify(streams, data.threads, &roster);
  return data;
}

std::filesystem::path write_cohort(const SyntheticCourse& course, const std::filesystem::path& dir) {
  const auto config_file = dir / "course.cfg";
  write_text_file(config_file, serialize_course_config(course.config));
  write_text_file(dir / course.config.roster_path, serialize_roster(course.config.roster));
  write_text_file(dir / *course.config.forum_path, serialize_forum_export(course.threads));
  for (const auto& [platform, path] : course.config.clickstreams) {
    auto it = course.clickstreams.find(platform);
    write_text_file(dir / path, serialize_clickstream(it == course.clickstreams.end() ? std::vector<UnifiedAction>{}
                                                                                      : it->second));
  }
  return config_file;
}

}  // namespace cohortlens
