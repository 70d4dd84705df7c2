#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cohortlens::csv {

using Record = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
/// Trailing `\r` is stripped. Empty lines are skipped.
std::vector<Record> parse(std::string_view text);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

void write_record(std::ostream& out, const Record& record);

/// Shortest round-trip decimal representation of a double.
std::string format_number(double v);

}  // namespace cohortlens::csv
