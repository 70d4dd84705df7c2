#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace cohortlens::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Threshold from COHORTLENS_LOG (error, warn, info, debug); default warn.
Level threshold();
void set_threshold(Level level);
Level parse_level(std::string_view s);

void write(Level level, std::string_view message);

template <typename... Args>
void emit(Level level, const Args&... args) {
  if (level > threshold()) return;
  std::ostringstream out;
  (out << ... << args);
  write(level, out.str());
}

template <typename... Args> void error(const Args&... a) { emit(Level::Error, a...); }
template <typename... Args> void warn(const Args&... a) { emit(Level::Warn, a...); }
template <typename... Args> void info(const Args&... a) { emit(Level::Info, a...); }
template <typename... Args> void debug(const Args&... a) { emit(Level::Debug, a...); }

}  // namespace cohortlens::log
