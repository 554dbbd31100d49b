#include "flowsentry/time.hpp"

#include <cstdio>

#include "flowsentry/error.hpp"

namespace flowsentry {
namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

[[noreturn]] void bad(std::string_view text) {
  throw Error(ErrorKind::malformed_input,
              "malformed timestamp '" + std::string(text) + "'");
}

} // namespace

Minute parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y, mo, d, h, mi, sec = 0;
  if (!read_digits(text, 0, 4, y) || text.size() < 16 || text[4] != '-' ||
      !read_digits(text, 5, 2, mo) || text[7] != '-' ||
      !read_digits(text, 8, 2, d) || (text[10] != 'T' && text[10] != 't' && text[10] != ' ') ||
      !read_digits(text, 11, 2, h) || text[13] != ':' ||
      !read_digits(text, 14, 2, mi))
    bad(text);

  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    if (!read_digits(text, pos + 1, 2, sec)) bad(text);
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      // fractional seconds are accepted only when zero
      ++pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (text[pos] != '0') bad(text);
        ++pos;
      }
    }
  }

  int offset_min = 0;
  if (pos == text.size()) {
    bad(text); // RFC 3339 requires a zone designator
  } else if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    int oh, om;
    if (!read_digits(text, pos + 1, 2, oh) || pos + 3 >= text.size() ||
        text[pos + 3] != ':' || !read_digits(text, pos + 4, 2, om))
      bad(text);
    offset_min = (text[pos] == '-' ? -1 : 1) * (oh * 60 + om);
    pos += 6;
  } else {
    bad(text);
  }
  if (pos != text.size()) bad(text);

  if (sec != 0)
    throw Error(ErrorKind::malformed_input,
                "timestamp '" + std::string(text) + "' is not on a minute boundary");

  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59) bad(text);
  Minute local = sys_days{ymd} + hours{h} + minutes{mi};
  return local - minutes{offset_min};
}

std::string format_timestamp(Minute t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  auto tod = t - day_point;
  const int mins = static_cast<int>(tod.count());
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00Z",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), mins / 60, mins % 60);
  return buf;
}

} // namespace flowsentry
