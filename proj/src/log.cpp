#include "cohortlens/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "cohortlens/error.hpp"

namespace cohortlens {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Schema: return "schema";
    case ErrorCategory::Validation: return "validation";
    case ErrorCategory::Contract: return "contract";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Data: return "data";
  }
  return "error";
}

namespace log {
namespace {

Level from_env() {
  const char* v = std::getenv("COHORTLENS_LOG");
  if (!v || !*v) return Level::Warn;
  try {
    return parse_level(v);
  } catch (const Error&) {
    return Level::Warn;
  }
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

std::mutex sink_mutex;

}  // namespace

Level parse_level(std::string_view s) {
  if (s == "error") return Level::Error;
  if (s == "warn" || s == "warning") return Level::Warn;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  throw ConfigError("unknown log level '" + std::string(s) + "'");
}

Level threshold() { return static_cast<Level>(current().load()); }
void set_threshold(Level level) { current().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  static constexpr const char* kTags[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(sink_mutex);
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace log
}  // namespace cohortlens
