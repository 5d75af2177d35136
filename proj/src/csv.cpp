#include "canopy/csv.hpp"

#include "canopy/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace canopy {

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
    if (auto i = find_column(name)) return *i;
    throw ValidationError("missing CSV column '" + std::string(name) + "'", std::string(name));
}

namespace {

std::string trim_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

}  // namespace

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false, at_line_start = true, any_field = false;
    std::size_t i = 0;
    auto end_record = [&] {
        record.push_back(field);
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        any_field = false;
        at_line_start = true;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (at_line_start && !in_quotes && c == '#' && table.header.empty() && records.empty()) {
            const std::size_t nl = text.find('\n', i);
            table.comments.push_back(trim_cr(std::string(text.substr(i, nl == std::string_view::npos ? text.npos : nl - i))));
            i = nl == std::string_view::npos ? text.size() : nl + 1;
            continue;
        }
        at_line_start = false;
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
            any_field = true;
        } else if (c == ',') {
            record.push_back(field);
            field.clear();
            any_field = true;
        } else if (c == '\n') {
            if (any_field || !field.empty() || !record.empty()) end_record();
            else at_line_start = true;
        } else if (c != '\r') {
            field += c;
            any_field = true;
        }
        ++i;
    }
    if (in_quotes) throw ValidationError("unterminated quoted CSV field", "csv");
    if (any_field || !field.empty() || !record.empty()) end_record();
    if (records.empty()) throw ValidationError("CSV has no header row", "csv");
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw ValidationError("CSV row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                      " fields, header has " + std::to_string(table.header.size()),
                                  "csv");
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CSV '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    try {
        return parse_csv(text);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what(), e.field());
    }
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(value);
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_field(fields[i]);
    }
    out << '\n';
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

double parse_number(std::string_view text, std::string_view what) {
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    std::string_view t = text.substr(b, e - b);
    if (!t.empty() && t.front() == '+') t.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ValidationError("invalid number '" + std::string(text) + "' for " + std::string(what), std::string(what));
    }
    return v;
}

}  // namespace canopy
