#include "ncssl/csv.hpp"

#include <charconv>
#include <ostream>

#include <fmt/format.h>

#include "ncssl/error.hpp"

namespace ncssl::csv {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_comments(std::ostream& out, const std::vector<std::string>& lines) {
    for (const auto& line : lines) out << "# " << line << '\n';
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << cells[i];
    }
    out << '\n';
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw InvalidConfig(fmt::format("not a number: '{}'", s));
    return v;
}

}  // namespace ncssl::csv
