#include "cohortlens/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"

namespace cohortlens {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw ParseError("invalid number '" + t + "' for " + what);
  return v;
}

}  // namespace

// ---------------------------------------------------------------- enums

std::string_view to_string(Platform p) {
  switch (p) {
    case Platform::Forum: return "Forum";
    case Platform::LMS: return "LMS";
    case Platform::Assignments: return "Assignments";
    case Platform::VCS: return "VCS";
    case Platform::CI: return "CI";
  }
  return "?";
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Student: return "student";
    case Role::TA: return "ta";
    case Role::Instructor: return "instructor";
  }
  return "?";
}

std::string_view to_string(Anonymity a) {
  switch (a) {
    case Anonymity::None: return "none";
    case Anonymity::Partial: return "partial";
    case Anonymity::Complete: return "complete";
  }
  return "?";
}

Platform parse_platform(std::string_view s) {
  const std::string l = lower(s);
  if (l == "forum") return Platform::Forum;
  if (l == "lms") return Platform::LMS;
  if (l == "assignments") return Platform::Assignments;
  if (l == "vcs") return Platform::VCS;
  if (l == "ci") return Platform::CI;
  throw SchemaError("platform", "unknown platform '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
  if (s == "student") return Role::Student;
  if (s == "ta") return Role::TA;
  if (s == "instructor") return Role::Instructor;
  throw SchemaError("role", "unknown role '" + std::string(s) + "'");
}

Anonymity parse_anonymity(std::string_view s) {
  if (s == "none") return Anonymity::None;
  if (s == "partial") return Anonymity::Partial;
  if (s == "complete") return Anonymity::Complete;
  throw SchemaError("anonymity", "unknown anonymity '" + std::string(s) + "'");
}

bool unified_less(const UnifiedAction& a, const UnifiedAction& b) {
  const auto key = [](const UnifiedAction& x) {
    return std::make_tuple(std::cref(x.student_id), x.timestamp, to_string(x.platform),
                           std::cref(x.action_kind), std::cref(x.detail), x.off_roster);
  };
  return key(a) < key(b);
}

std::size_t ThreadSet::post_count() const {
  std::size_t n = 0;
  for (const auto& t : threads) {
    n += 1 + t.replies.size();
    for (const auto& r : t.replies) n += r.comments.size();
  }
  return n;
}

// ---------------------------------------------------------------- forum JSON

namespace {

const json& require(const json& obj, const char* field, const std::string& context) {
  auto it = obj.find(field);
  if (it == obj.end())
    throw SchemaError(field, "missing required field '" + std::string(field) + "' in " + context);
  return *it;
}

std::string as_string(const json& v, const char* field, const std::string& context) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw SchemaError(field, "field '" + std::string(field) + "' in " + context + " must be a string");
}

Post parse_post(const json& obj, const std::string& context) {
  if (!obj.is_object()) throw SchemaError(context, context + " must be an object");
  Post p;
  p.post_id = as_string(require(obj, "id", context), "id", context);
  const std::string where = context + " '" + p.post_id + "'";
  p.role = parse_role(as_string(require(obj, "role", where), "role", where));
  const std::string time = as_string(require(obj, "time", where), "time", where);
  try {
    p.timestamp = parse_iso8601(time);
  } catch (const ParseError& e) {
    throw SchemaError("time", std::string(e.what()) + " in " + where);
  }
  p.anonymity = parse_anonymity(as_string(require(obj, "anonymity", where), "anonymity", where));
  if (auto it = obj.find("author"); it != obj.end() && !it->is_null())
    p.author_id = as_string(*it, "author", where);
  if (p.anonymity == Anonymity::Complete && p.author_id)
    throw SchemaError("author", "post '" + p.post_id + "' is completely anonymous but names an author");
  if (p.anonymity != Anonymity::Complete && !p.author_id)
    throw SchemaError("author", "missing required field 'author' in " + where);
  if (p.author_id && p.author_id->empty())
    throw SchemaError("author", "empty author in " + where);
  return p;
}

json post_json(const Post& p) {
  json j = json::object();
  j["id"] = p.post_id;
  if (p.author_id) j["author"] = *p.author_id;
  j["role"] = to_string(p.role);
  j["time"] = format_iso8601(p.timestamp);
  j["anonymity"] = to_string(p.anonymity);
  return j;
}

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()) && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void validate(const ThreadSet& threads) {
  for (const auto& t : threads.threads) {
    const auto check_author = [](const Post& p) {
      if ((p.anonymity == Anonymity::Complete) == p.author_id.has_value())
        throw SchemaError("author", "post '" + p.post_id + "' violates the author/anonymity rule");
    };
    check_author(t.head);
    for (const auto& r : t.replies) {
      check_author(r.post);
      if (r.post.timestamp < t.head.timestamp)
        throw ValidationError(r.post.post_id, "reply '" + r.post.post_id +
                                                  "' is earlier than its thread head '" +
                                                  t.head.post_id + "'");
      for (const auto& c : r.comments) {
        check_author(c);
        if (c.timestamp < t.head.timestamp)
          throw ValidationError(c.post_id, "comment '" + c.post_id +
                                               "' is earlier than its thread head '" +
                                               t.head.post_id + "'");
        if (c.timestamp < r.post.timestamp)
          throw ValidationError(c.post_id, "comment '" + c.post_id +
                                               "' is earlier than the reply it annotates '" +
                                               r.post.post_id + "'");
      }
    }
  }
}

ThreadSet parse_forum_export(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(json_text, e.byte);
    throw ParseError("malformed forum JSON at line " + std::to_string(line) + ", column " +
                         std::to_string(col) + ": " + e.what(),
                     line, col);
  }
  if (!doc.is_object()) throw SchemaError("threads", "forum export must be a JSON object");
  const json& arr = require(doc, "threads", "forum export");
  if (!arr.is_array()) throw SchemaError("threads", "'threads' must be an array");

  ThreadSet out;
  out.threads.reserve(arr.size());
  for (const auto& tj : arr) {
    Thread t;
    t.head = parse_post(tj, "thread");
    if (auto it = tj.find("replies"); it != tj.end()) {
      if (!it->is_array()) throw SchemaError("replies", "'replies' must be an array");
      for (const auto& rj : *it) {
        Reply r;
        r.post = parse_post(rj, "reply");
        if (auto ct = rj.find("comments"); ct != rj.end()) {
          if (!ct->is_array()) throw SchemaError("comments", "'comments' must be an array");
          for (const auto& cj : *ct) r.comments.push_back(parse_post(cj, "comment"));
        }
        t.replies.push_back(std::move(r));
      }
    }
    out.threads.push_back(std::move(t));
  }
  validate(out);
  return out;
}

ThreadSet read_forum_export(const std::filesystem::path& file) {
  return parse_forum_export(read_text_file(file));
}

std::string serialize_forum_export(const ThreadSet& threads) {
  json arr = json::array();
  for (const auto& t : threads.threads) {
    json tj = post_json(t.head);
    json replies = json::array();
    for (const auto& r : t.replies) {
      json rj = post_json(r.post);
      json comments = json::array();
      for (const auto& c : r.comments) comments.push_back(post_json(c));
      rj["comments"] = std::move(comments);
      replies.push_back(std::move(rj));
    }
    tj["replies"] = std::move(replies);
    arr.push_back(std::move(tj));
  }
  json doc;
  doc["threads"] = std::move(arr);
  return doc.dump(1) + "\n";
}

ThreadSet filter_anonymous(const ThreadSet& threads) {
  ThreadSet out;
  for (const auto& t : threads.threads) {
    if (t.head.anonymity == Anonymity::Complete) continue;
    Thread kept{t.head, {}};
    for (const auto& r : t.replies) {
      if (r.post.anonymity == Anonymity::Complete) continue;
      Reply rk{r.post, {}};
      for (const auto& c : r.comments)
        if (c.anonymity != Anonymity::Complete) rk.comments.push_back(c);
      kept.replies.push_back(std::move(rk));
    }
    out.threads.push_back(std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------- clickstream CSV

std::vector<UnifiedAction> parse_clickstream(std::string_view csv_text, Platform platform,
                                             const std::set<std::string>* roster) {
  const auto records = csv::parse(csv_text);
  std::vector<UnifiedAction> out;
  if (records.empty()) return out;

  const auto& header = records.front();
  const auto column = [&](const char* name, bool required) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return static_cast<std::ptrdiff_t>(i);
    if (required) throw SchemaError(name, std::string("clickstream header lacks column '") + name + "'");
    return -1;
  };
  const auto c_student = column("student_id", true);
  const auto c_time = column("timestamp", true);
  const auto c_kind = column("action_kind", true);
  const auto c_detail = column("detail", false);

  out.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto field = [&](std::ptrdiff_t c) -> std::string {
      return c >= 0 && static_cast<std::size_t>(c) < rec.size() ? rec[c] : std::string{};
    };
    UnifiedAction a;
    a.platform = platform;
    a.student_id = trim(field(c_student));
    if (a.student_id.empty()) throw RowError("row " + std::to_string(r) + ": empty student_id", r);
    try {
      a.timestamp = parse_iso8601(trim(field(c_time)));
    } catch (const ParseError&) {
      throw RowError("row " + std::to_string(r) + ": unparseable timestamp '" + field(c_time) + "'", r);
    }
    a.action_kind = field(c_kind);
    if (c_detail >= 0) {
      std::string d = field(c_detail);
      if (!d.empty()) a.detail = std::move(d);
    }
    a.off_roster = roster != nullptr && !roster->contains(a.student_id);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<UnifiedAction> read_clickstream(const std::filesystem::path& file, Platform platform,
                                            const std::set<std::string>* roster) {
  return parse_clickstream(read_text_file(file), platform, roster);
}

std::string serialize_clickstream(const std::vector<UnifiedAction>& actions) {
  std::ostringstream out;
  csv::write_record(out, {"student_id", "timestamp", "action_kind", "detail"});
  for (const auto& a : actions)
    csv::write_record(out, {a.student_id, format_iso8601(a.timestamp), a.action_kind,
                            a.detail.value_or("")});
  return out.str();
}

// ---------------------------------------------------------------- unify

UnifiedLog::UnifiedLog(std::vector<UnifiedAction> sorted_actions) : actions_(std::move(sorted_actions)) {
  if (!std::is_sorted(actions_.begin(), actions_.end(), unified_less))
    throw ContractError("UnifiedLog requires actions sorted by (student, time, platform, kind)");
}

UnifiedLog unify(const std::vector<std::vector<UnifiedAction>>& streams, const ThreadSet& threads,
                 const std::set<std::string>* roster) {
  std::size_t total = 0;
  for (const auto& s : streams) total += s.size();
  std::vector<UnifiedAction> all;
  all.reserve(total + threads.post_count());
  for (const auto& s : streams) all.insert(all.end(), s.begin(), s.end());

  const auto add_post = [&](const Post& p, const char* kind) {
    if (!p.author_id) return;
    UnifiedAction a;
    a.student_id = *p.author_id;
    a.timestamp = p.timestamp;
    a.platform = Platform::Forum;
    a.action_kind = kind;
    a.detail = p.post_id;
    a.off_roster = roster != nullptr && !roster->contains(a.student_id);
    all.push_back(std::move(a));
  };
  for (const auto& t : threads.threads) {
    add_post(t.head, "post");
    for (const auto& r : t.replies) {
      add_post(r.post, "reply");
      for (const auto& c : r.comments) add_post(c, "comment");
    }
  }
  std::sort(all.begin(), all.end(), unified_less);
  return UnifiedLog(std::move(all));
}

// ---------------------------------------------------------------- config

std::string_view to_string(Slice s) {
  switch (s) {
    case Slice::BeforeTest1: return "t1";
    case Slice::BeforeTest2: return "t2";
    case Slice::Full: return "full";
  }
  return "?";
}

Slice parse_slice(std::string_view s) {
  const std::string l = lower(s);
  if (l == "t1" || l == "beforetest1") return Slice::BeforeTest1;
  if (l == "t2" || l == "beforetest2") return Slice::BeforeTest2;
  if (l == "full") return Slice::Full;
  throw ConfigError("unknown slice '" + std::string(s) + "' (expected t1, t2 or full)");
}

std::set<std::string> CourseConfig::roster_ids() const {
  std::set<std::string> ids;
  for (const auto& [id, grade] : roster) ids.insert(id);
  return ids;
}

void CourseConfig::validate() const {
  if (course_id.empty()) throw ConfigError("course_id is required");
  if (!(test1_date < test2_date && test2_date < end_date))
    throw ConfigError("dates must satisfy test1_date < test2_date < end_date");
  if (start_date && !(*start_date < test1_date))
    throw ConfigError("start_date must precede test1_date");
  const auto in_open = [](double v) { return v > 0.0 && v < 100.0; };
  if (!in_open(distinction_threshold) || !in_open(at_risk_threshold))
    throw ConfigError("thresholds must lie in (0, 100)");
  for (const auto& [id, grade] : roster)
    if (grade && (*grade < 0.0 || *grade > 100.0))
      throw ConfigError("grade of '" + id + "' outside [0, 100]");
}

std::map<std::string, std::optional<double>> parse_roster(std::string_view csv_text) {
  const auto records = csv::parse(csv_text);
  std::map<std::string, std::optional<double>> roster;
  if (records.empty()) return roster;
  const auto& header = records.front();
  if (header.size() < 2 || trim(header[0]) != "student_id" || trim(header[1]) != "grade")
    throw SchemaError("grade", "roster header must be 'student_id,grade'");
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string id = trim(rec.empty() ? std::string{} : rec[0]);
    if (id.empty()) throw RowError("roster row " + std::to_string(r) + ": empty student_id", r);
    std::optional<double> grade;
    if (rec.size() > 1 && !trim(rec[1]).empty()) {
      try {
        grade = parse_double(rec[1], "grade");
      } catch (const ParseError& e) {
        throw RowError("roster row " + std::to_string(r) + ": " + e.what(), r);
      }
    }
    if (!roster.emplace(id, grade).second)
      throw ValidationError(id, "duplicate roster entry '" + id + "'");
  }
  return roster;
}

std::string serialize_roster(const std::map<std::string, std::optional<double>>& roster) {
  std::ostringstream out;
  csv::write_record(out, {"student_id", "grade"});
  for (const auto& [id, grade] : roster)
    csv::write_record(out, {id, grade ? csv::format_number(*grade) : std::string{}});
  return out.str();
}

CourseConfig parse_course_config(std::string_view text, const std::filesystem::path& base_dir) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (!kv.emplace(key, trim(t.substr(eq + 1))).second)
      throw ConfigError("duplicate key '" + key + "' on line " + std::to_string(lineno));
  }

  const auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto need = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw ConfigError("missing required key '" + key + "'");
    return *v;
  };
  const auto date = [&](const std::string& key, const std::string& v) {
    try {
      return parse_iso8601(v);
    } catch (const ParseError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  };
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  CourseConfig c;
  c.course_id = need("course_id");
  if (auto v = take("start_date")) c.start_date = date("start_date", *v);
  c.test1_date = date("test1_date", need("test1_date"));
  c.test2_date = date("test2_date", need("test2_date"));
  c.end_date = date("end_date", need("end_date"));
  try {
    if (auto v = take("distinction_threshold")) c.distinction_threshold = parse_double(*v, "distinction_threshold");
    if (auto v = take("at_risk_threshold")) c.at_risk_threshold = parse_double(*v, "at_risk_threshold");
    if (auto v = take("feature_count")) {
      const double k = parse_double(*v, "feature_count");
      if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k)))
        throw ConfigError("feature_count must be a positive integer");
      c.feature_count = static_cast<std::size_t>(k);
    }
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  c.roster_path = resolve(need("roster"));
  if (auto v = take("forum")) c.forum_path = resolve(*v);
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.rfind("clickstream.", 0) == 0) {
      const Platform p = parse_platform(it->first.substr(12));
      if (p == Platform::Forum) throw ConfigError("forum activity comes from the forum export, not a clickstream");
      c.clickstreams[p] = resolve(it->second);
      it = kv.erase(it);
    } else {
      ++it;
    }
  }
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");

  c.roster = parse_roster(read_text_file(c.roster_path));
  c.validate();
  return c;
}

CourseConfig read_course_config(const std::filesystem::path& file) {
  return parse_course_config(read_text_file(file), file.parent_path());
}

std::string serialize_course_config(const CourseConfig& c) {
  std::ostringstream out;
  const auto rel = [](const std::filesystem::path& p) { return p.generic_string(); };
  out << "course_id = " << c.course_id << '\n';
  if (c.start_date) out << "start_date = " << format_iso8601(*c.start_date) << '\n';
  out << "test1_date = " << format_iso8601(c.test1_date) << '\n';
  out << "test2_date = " << format_iso8601(c.test2_date) << '\n';
  out << "end_date = " << format_iso8601(c.end_date) << '\n';
  out << "distinction_threshold = " << csv::format_number(c.distinction_threshold) << '\n';
  out << "at_risk_threshold = " << csv::format_number(c.at_risk_threshold) << '\n';
  if (c.feature_count) out << "feature_count = " << *c.feature_count << '\n';
  out << "roster = " << rel(c.roster_path) << '\n';
  if (c.forum_path) out << "forum = " << rel(*c.forum_path) << '\n';
  for (const auto& [p, path] : c.clickstreams)
    out << "clickstream." << to_string(p) << " = " << rel(path) << '\n';
  return out.str();
}

TimeWindow slice_window(const CourseConfig& config, Slice slice, Timestamp fallback_start) {
  const Timestamp begin = config.start_date.value_or(fallback_start);
  switch (slice) {
    case Slice::BeforeTest1: return {begin, config.test1_date};
    case Slice::BeforeTest2: return {begin, config.test2_date};
    case Slice::Full: return {begin, config.end_date};
  }
  return {begin, config.end_date};
}

Timestamp CourseData::semester_start() const {
  if (config.start_date) return *config.start_date;
  Timestamp earliest = config.test1_date;
  for (const auto& a : log.actions()) earliest = std::min(earliest, a.timestamp);
  return earliest;
}

CourseData load_course(const std::filesystem::path& config_file) {
  CourseData data;
  data.config = read_course_config(config_file);
  const auto roster = data.config.roster_ids();
  ThreadSet threads;
  if (data.config.forum_path) threads = read_forum_export(*data.config.forum_path);
  data.threads = filter_anonymous(threads);
  std::vector<std::vector<UnifiedAction>> streams;
  for (const auto& [platform, path] : data.config.clickstreams)
    streams.push_back(read_clickstream(path, platform, &roster));
  data.log = unify(streams, data.threads, &roster);
  return data;
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& file, std::string_view contents) {
  if (file.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + file.string() + "'");
}

}  // namespace cohortlens
