#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowcast::csv {

// Minimal RFC-4180-style CSV support: quoted fields, doubled quotes,
// configurable delimiter. Newlines inside quoted fields are not supported;
// event logs do not need them and line numbers stay meaningful in errors.

std::vector<std::string> split_row(const std::string& line, char delimiter);

// Quotes a field when it contains the delimiter, a quote or leading/trailing
// whitespace.
std::string format_field(const std::string& field, char delimiter);

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter);

}  // namespace flowcast::csv
