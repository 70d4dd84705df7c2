#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace cohortlens {

using Timestamp = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM|+HHMM)` and normalizes to UTC.
/// A space is accepted in place of `T`. The offset designator is mandatory.
/// Throws ParseError.
Timestamp parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp t);

inline double minutes_between(Timestamp from, Timestamp to) {
  return static_cast<double>((to - from).count()) / 60.0;
}

/// Half-open interval [begin, end).
struct TimeWindow {
  Timestamp begin;
  Timestamp end;

  bool contains(Timestamp t) const { return begin <= t && t < end; }
  double length_minutes() const { return minutes_between(begin, end); }
  bool operator==(const TimeWindow&) const = default;
};

}  // namespace cohortlens
