#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "ftaed/errors.hpp"

namespace ftaed {

// Civil-calendar helpers on day numbers (days since 1970-01-01). The grid
// and the day-assignment file agree on dates through these.

struct CivilDate {
  int year;
  int month;  // 1..12
  int day;    // 1..31
};

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
                   static_cast<int>(d)};
}

inline std::string format_date(std::int64_t day_number) {
  CivilDate c = civil_from_days(day_number);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.year, c.month, c.day);
  return buf;
}

// Parses YYYY-MM-DD into a day number.
inline std::int64_t parse_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    fail(ErrorKind::MalformedRow, "bad date '" + s + "' (want YYYY-MM-DD)");
  auto digits = [&](int begin, int len) {
    int v = 0;
    for (int i = begin; i < begin + len; ++i) {
      char c = s[static_cast<size_t>(i)];
      if (c < '0' || c > '9')
        fail(ErrorKind::MalformedRow, "bad date '" + s + "'");
      v = v * 10 + (c - '0');
    }
    return v;
  };
  int y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
  if (m < 1 || m > 12 || d < 1 || d > 31)
    fail(ErrorKind::MalformedRow, "bad date '" + s + "'");
  return days_from_civil(y, m, d);
}

}  // namespace ftaed
