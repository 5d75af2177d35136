#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace canopy {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// ISO-8601: YYYY-MM-DD, or YYYY-MM-DDTHH:MM[:SS[.fff]] with an optional Z or
// +HH:MM / -HH:MM offset. A missing zone means UTC.
Timestamp parse_timestamp(std::string_view text, std::string_view field = "timestamp");

// YYYY-MM-DDTHH:MM:SSZ, with .fff only when milliseconds are non-zero.
std::string format_timestamp(Timestamp t);

// Calendar date check; returns the canonical YYYY-MM-DD form.
std::string parse_date(std::string_view text, std::string_view field = "date");

}  // namespace canopy
