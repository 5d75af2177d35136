#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace canopy {

// RFC 4180-style table: first non-comment line is the header. Lines starting
// with '#' before the header are kept as comments.
struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find_column(std::string_view name) const;
    // Throws ValidationError naming the column when absent.
    std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_field(std::string_view value);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest representation that round-trips, '.' decimal separator.
std::string format_number(double value);
double parse_number(std::string_view text, std::string_view what);

}  // namespace canopy
