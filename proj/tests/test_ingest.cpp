#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "cohortlens/error.hpp"
#include "cohortlens/ingest.hpp"
#include "oracles.hpp"

using namespace cohortlens;
using oracle::ts;

namespace {

const char* kThreeThreads = R"({"threads": [
  {"id": "h1", "author": "u0", "role": "student", "time": "2024-01-10T10:00:00Z", "anonymity": "none",
   "replies": [
     {"id": "r1", "author": "u1", "role": "student", "time": "2024-01-10T11:00:00Z", "anonymity": "none",
      "comments": [
        {"id": "c1", "author": "u2", "role": "ta", "time": "2024-01-10T12:00:00Z", "anonymity": "none"},
        {"id": "c2", "author": "u0", "role": "student", "time": "2024-01-10T12:30:00Z", "anonymity": "partial"}]},
     {"id": "r2", "role": "student", "time": "2024-01-10T13:00:00Z", "anonymity": "complete",
      "comments": [
        {"id": "c3", "author": "u3", "role": "student", "time": "2024-01-10T14:00:00Z", "anonymity": "none"}]}]},
  {"id": "h2", "author": "u4", "role": "instructor", "time": "2024-01-11T09:00:00+01:00", "anonymity": "none",
   "replies": []},
  {"id": 3, "role": "student", "time": "2024-01-12T10:00:00Z", "anonymity": "complete",
   "replies": [
     {"id": "r3", "author": "u1", "role": "student", "time": "2024-01-12T10:05:00Z", "anonymity": "none",
      "comments": []}]}
]})";

UnifiedAction action(std::string id, long t, Platform p, std::string kind) {
  UnifiedAction a;
  a.student_id = std::move(id);
  a.timestamp = ts(t);
  a.platform = p;
  a.action_kind = std::move(kind);
  return a;
}

}  // namespace

TEST_CASE("minimal forum export") {
  const auto set = parse_forum_export(R"({"threads":[{"id":"h","author":"u0","role":"student",
    "time":"1970-01-01T00:01:40Z","anonymity":"none","replies":[{"id":"r","author":"u1","role":"student",
    "time":"1970-01-01T00:03:20Z","anonymity":"none","comments":[]}]}]})");
  REQUIRE(set.threads.size() == 1);
  CHECK(set.threads[0].replies.size() == 1);
  CHECK(set.threads[0].head.timestamp == ts(100));
  CHECK(set.threads[0].replies[0].post.author_id == "u1");
}

TEST_CASE("hand-counted fixture: 3 threads, 3 replies, 3 comments") {
  const auto set = parse_forum_export(kThreeThreads);
  REQUIRE(set.threads.size() == 3);
  CHECK(set.post_count() == 9);
  CHECK(set.threads[0].replies.size() == 2);
  CHECK(set.threads[0].replies[0].comments.size() == 2);
  CHECK(set.threads[0].replies[1].comments.size() == 1);
  CHECK(set.threads[0].replies[0].comments[0].role == Role::TA);
  CHECK(set.threads[0].replies[0].comments[1].anonymity == Anonymity::Partial);
  CHECK(set.threads[1].head.role == Role::Instructor);
  CHECK(set.threads[1].head.timestamp == parse_iso8601("2024-01-11T08:00:00Z"));
  CHECK(set.threads[2].head.post_id == "3");
  CHECK_FALSE(set.threads[2].head.author_id.has_value());
}

TEST_CASE("forum export errors") {
  SUBCASE("malformed JSON reports a position") {
    try {
      parse_forum_export("{\"threads\": [\n  {\"id\": }\n]}");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() > 0);
    }
  }
  SUBCASE("missing field is named") {
    try {
      parse_forum_export(R"({"threads":[{"id":"h","author":"u","role":"student","anonymity":"none","replies":[]}]})");
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "time");
    }
  }
  SUBCASE("complete anonymity with an author") {
    CHECK_THROWS_AS(parse_forum_export(R"({"threads":[{"id":"h","author":"u0","role":"student",
      "time":"2024-01-01T00:00:00Z","anonymity":"none","replies":[{"id":"r","author":"u1","role":"student",
      "time":"2024-01-01T01:00:00Z","anonymity":"complete","comments":[]}]}]})"),
                    SchemaError);
  }
  SUBCASE("reply earlier than head names the reply") {
    try {
      parse_forum_export(R"({"threads":[{"id":"h","author":"u0","role":"student",
        "time":"2024-01-01T05:00:00Z","anonymity":"none","replies":[{"id":"early","author":"u1",
        "role":"student","time":"2024-01-01T01:00:00Z","anonymity":"none","comments":[]}]}]})");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(e.subject() == "early");
    }
  }
  SUBCASE("unknown role") {
    CHECK_THROWS_AS(parse_forum_export(R"({"threads":[{"id":"h","author":"u0","role":"dean",
      "time":"2024-01-01T00:00:00Z","anonymity":"none","replies":[]}]})"),
                    SchemaError);
  }
}

TEST_CASE("forum export round-trips") {
  const auto set = parse_forum_export(kThreeThreads);
  CHECK(parse_forum_export(serialize_forum_export(set)) == set);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto r = oracle::random_threads(rng);
    CHECK(parse_forum_export(serialize_forum_export(r)) == r);
  }
}

TEST_CASE("filter_anonymous") {
  const auto set = parse_forum_export(kThreeThreads);
  const auto f = filter_anonymous(set);
  SUBCASE("complete-anonymous reply removed with its comments") {
    REQUIRE(f.threads.size() == 2);
    CHECK(f.threads[0].replies.size() == 1);
    CHECK(f.threads[0].replies[0].comments.size() == 2);
  }
  SUBCASE("complete-anonymous head drops the thread") {
    for (const auto& th : f.threads) CHECK(th.head.anonymity != Anonymity::Complete);
  }
  SUBCASE("partial posts keep their author") { CHECK(f.threads[0].replies[0].comments[1].author_id == "u0"); }
  SUBCASE("idempotent") { CHECK(filter_anonymous(f) == f); }
  SUBCASE("identity without anonymous posts") {
    std::mt19937_64 rng(5);
    const auto r = oracle::random_threads(rng);
    CHECK(filter_anonymous(r) == r);
  }
}

TEST_CASE("clickstream parsing") {
  const std::string three =
      "student_id,timestamp,action_kind,detail\n"
      "s1,2024-01-01T10:00:00Z,view,page1\n"
      "s2,2024-01-01T10:05:00Z,submit,\n"
      "s3,2024-01-01T10:06:00+00:00,view,page2\n";
  const std::set<std::string> roster{"s1", "s2"};
  const auto acts = parse_clickstream(three, Platform::LMS, &roster);
  REQUIRE(acts.size() == 3);
  CHECK(acts[0].detail == "page1");
  CHECK_FALSE(acts[1].detail.has_value());
  CHECK(acts[2].off_roster);
  CHECK_FALSE(acts[0].off_roster);
  CHECK(acts[0].platform == Platform::LMS);

  SUBCASE("bad timestamp cites the row") {
    try {
      parse_clickstream("student_id,timestamp,action_kind,detail\ns1,2024-01-01T10:00:00Z,view,\n"
                        "s1,not-a-date,view,\n",
                        Platform::LMS);
      FAIL("expected a row error");
    } catch (const RowError& e) {
      CHECK(e.row() == 2);
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }
  SUBCASE("empty file") { CHECK(parse_clickstream("", Platform::VCS).empty()); }
  SUBCASE("duplicates are kept") {
    const auto d = parse_clickstream(
        "student_id,timestamp,action_kind,detail\ns1,2024-01-01T10:00:00Z,view,x\ns1,2024-01-01T10:00:00Z,view,x\n",
        Platform::LMS);
    REQUIRE(d.size() == 2);
    CHECK(d[0] == d[1]);
  }
  SUBCASE("missing column") {
    CHECK_THROWS_AS(parse_clickstream("student_id,when,action_kind\ns1,x,view\n", Platform::LMS), SchemaError);
  }
  SUBCASE("round trip") { CHECK(parse_clickstream(serialize_clickstream(acts), Platform::LMS, &roster) == acts); }
}

TEST_CASE("unify merges, sorts and breaks ties by platform name") {
  const std::vector<UnifiedAction> a = {action("s2", 50, Platform::LMS, "view"), action("s1", 30, Platform::LMS, "view"),
                                        action("s1", 10, Platform::LMS, "view")};
  const std::vector<UnifiedAction> b = {action("s1", 20, Platform::VCS, "commit"), action("s2", 5, Platform::CI, "build"),
                                        action("s1", 30, Platform::Assignments, "submit"),
                                        action("s2", 50, Platform::Forum, "view")};
  const UnifiedLog log = unify({a, b}, ThreadSet{});
  REQUIRE(log.size() == 7);
  const auto& acts = log.actions();
  CHECK(std::is_sorted(acts.begin(), acts.end(), unified_less));
  CHECK(acts[2].platform == Platform::Assignments);  // s1@30: "Assignments" < "LMS"
  CHECK(acts[5].platform == Platform::Forum);        // s2@50: "Forum" < "LMS"

  SUBCASE("unify is a permutation") {
    std::vector<UnifiedAction> in = a;
    in.insert(in.end(), b.begin(), b.end());
    std::sort(in.begin(), in.end(), unified_less);
    CHECK(in == acts);
  }
}

TEST_CASE("unify converts forum posts") {
  const auto set = filter_anonymous(parse_forum_export(kThreeThreads));
  const std::set<std::string> roster{"u0", "u1", "u3"};
  const UnifiedLog log = unify({}, set, &roster);
  CHECK(log.size() == set.post_count());
  std::size_t posts = 0, replies = 0, comments = 0, off = 0;
  for (const auto& x : log.actions()) {
    CHECK(x.platform == Platform::Forum);
    posts += x.action_kind == "post";
    replies += x.action_kind == "reply";
    comments += x.action_kind == "comment";
    off += x.off_roster;
  }
  CHECK(posts == 2);
  CHECK(replies == 1);
  CHECK(comments == 2);
  CHECK(off == 2);  // u2 and u4
}

TEST_CASE("course config") {
  const std::string text =
      "# demo\n"
      "course_id = DEMO\n"
      "test1_date = 2024-02-01T00:00:00Z\n"
      "test2_date = 2024-03-01T00:00:00Z\n"
      "end_date = 2024-04-01T00:00:00Z\n"
      "roster = roster.csv\n"
      "clickstream.lms = lms.csv\n";
  const auto dir = std::filesystem::temp_directory_path() / "cohortlens_test_ingest_config";
  write_text_file(dir / "roster.csv", "student_id,grade\ns1,95\ns2,60\n");
  SUBCASE("defaults and relative paths") {
    const auto c = parse_course_config(text, dir);
    CHECK(c.course_id == "DEMO");
    CHECK(c.distinction_threshold == 90.0);
    CHECK(c.at_risk_threshold == 70.0);
    CHECK(c.roster_path == dir / "roster.csv");
    CHECK(c.clickstreams.at(Platform::LMS) == dir / "lms.csv");
    CHECK(c.roster.size() == 2);
    CHECK_FALSE(c.start_date.has_value());
    const auto again = parse_course_config(serialize_course_config(c), "/");
    CHECK(again.test2_date == c.test2_date);
    CHECK(again.roster == c.roster);
  }
  SUBCASE("date order enforced") {
    std::string bad = text;
    bad.replace(bad.find("2024-03-01"), 10, "2024-01-15");
    CHECK_THROWS_AS(parse_course_config(bad, dir), ConfigError);
  }
  SUBCASE("unknown key rejected") { CHECK_THROWS_AS(parse_course_config(text + "colour = blue\n", dir), ConfigError); }
  SUBCASE("threshold range") {
    CHECK_THROWS_AS(parse_course_config(text + "distinction_threshold = 100\n", dir), ConfigError);
  }
  SUBCASE("missing roster file") {
    CHECK_THROWS_AS(parse_course_config(text, dir / "nowhere"), IoError);
  }
  SUBCASE("roster parsing") {
    const auto r = parse_roster("student_id,grade\ns1,91.5\ns2,\n");
    CHECK(r.at("s1") == 91.5);
    CHECK_FALSE(r.at("s2").has_value());
    CHECK(parse_roster(serialize_roster(r)) == r);
    CHECK_THROWS_AS(parse_roster("id,score\ns1,1\n"), SchemaError);
  }
  SUBCASE("slices") {
    const auto c = parse_course_config(text, dir);
    const auto start = parse_iso8601("2024-01-08T00:00:00Z");
    CHECK(slice_window(c, Slice::BeforeTest1, start) == TimeWindow{start, c.test1_date});
    CHECK(slice_window(c, Slice::Full, start).end == c.end_date);
    CHECK(parse_slice("t2") == Slice::BeforeTest2);
    CHECK(parse_slice("full") == Slice::Full);
    CHECK_THROWS(parse_slice("t3"));
  }
}
