#pragma once

// CSV conventions shared by every producer: '.' decimal separator, LF line
// endings, floats printed with 17 significant digits. Lines starting with '#'
// before the header carry provenance (resolved config, config hash).

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ncssl::csv {

std::string format_double(double v);

/// Writes "# key=value" lines.
void write_comments(std::ostream& out, const std::vector<std::string>& lines);

void write_row(std::ostream& out, const std::vector<std::string>& cells);

std::vector<std::string> split(std::string_view line, char sep = ',');

double parse_double(std::string_view s);

}  // namespace ncssl::csv
