#include "canopy/timeutil.hpp"

#include "canopy/error.hpp"

#include <charconv>
#include <cstdio>

namespace canopy {

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    const auto* b = s.data() + pos;
    for (std::size_t i = 0; i < n; ++i)
        if (b[i] < '0' || b[i] > '9') return false;
    return std::from_chars(b, b + n, out).ec == std::errc{};
}

[[noreturn]] void bad(std::string_view text, std::string_view field, const char* what) {
    throw ValidationError("invalid " + std::string(field) + " '" + std::string(text) + "': " + what, std::string(field));
}

std::chrono::sys_days civil(std::string_view text, std::string_view field) {
    int y, m, d;
    if (!digits(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || !digits(text, 5, 2, m) || text[7] != '-' ||
        !digits(text, 8, 2, d)) {
        bad(text, field, "expected YYYY-MM-DD");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) bad(text, field, "no such calendar date");
    return std::chrono::sys_days{ymd};
}

}  // namespace

Timestamp parse_timestamp(std::string_view text, std::string_view field) {
    using namespace std::chrono;
    const sys_days day = civil(text, field);
    Timestamp t{day};
    if (text.size() == 10) return t;
    if (text[10] != 'T' && text[10] != ' ') bad(text, field, "expected 'T' after the date");
    int hh, mm, ss = 0;
    if (!digits(text, 11, 2, hh) || text.size() < 16 || text[13] != ':' || !digits(text, 14, 2, mm)) {
        bad(text, field, "expected HH:MM");
    }
    std::size_t pos = 16;
    long long ms = 0;
    if (pos < text.size() && text[pos] == ':') {
        if (!digits(text, pos + 1, 2, ss)) bad(text, field, "expected seconds");
        pos += 3;
        if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
            ++pos;
            long long scale = 100;
            const std::size_t start = pos;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
                ms += (text[pos] - '0') * scale;
                scale /= 10;
                ++pos;
            }
            if (pos == start) bad(text, field, "empty fraction");
        }
    }
    if (hh > 23 || mm > 59 || ss > 60) bad(text, field, "time out of range");
    t += hours{hh} + minutes{mm} + seconds{ss} + milliseconds{ms};
    if (pos == text.size()) return t;
    if (text[pos] == 'Z' && pos + 1 == text.size()) return t;
    if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size() && text[pos + 3] == ':') {
        int oh, om;
        if (!digits(text, pos + 1, 2, oh) || !digits(text, pos + 4, 2, om) || oh > 23 || om > 59) {
            bad(text, field, "bad zone offset");
        }
        const minutes off = hours{oh} + minutes{om};
        return text[pos] == '+' ? t - off : t + off;
    }
    bad(text, field, "unexpected trailing characters");
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const sys_days day = floor<days>(t);
    const year_month_day ymd{day};
    const auto rest = t - day;
    const auto h = duration_cast<hours>(rest);
    const auto m = duration_cast<minutes>(rest - h);
    const auto s = duration_cast<seconds>(rest - h - m);
    const auto ms = (rest - h - m - s).count();
    char buf[40];
    if (ms != 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02lld.%03lldZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                      static_cast<int>(m.count()), static_cast<long long>(s.count()), static_cast<long long>(ms));
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02lldZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                      static_cast<int>(m.count()), static_cast<long long>(s.count()));
    }
    return buf;
}

std::string parse_date(std::string_view text, std::string_view field) {
    if (text.size() != 10) bad(text, field, "expected YYYY-MM-DD");
    civil(text, field);
    return std::string(text);
}

}  // namespace canopy
