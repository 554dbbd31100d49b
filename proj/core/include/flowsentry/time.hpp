#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace flowsentry {

/// UTC instant at minute resolution.
using Minute = std::chrono::sys_time<std::chrono::minutes>;

/// Parses an RFC 3339 timestamp (`2017-04-07T08:00:00Z`, numeric offsets
/// allowed, seconds optional). Throws Error(malformed_input) on bad syntax
/// or a non-zero seconds field.
Minute parse_timestamp(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_timestamp(Minute t);

inline long long minutes_between(Minute from, Minute to) {
  return (to - from).count();
}

} // namespace flowsentry
