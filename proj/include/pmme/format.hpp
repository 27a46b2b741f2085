#pragma once

#include <cstdio>
#include <string>

namespace pmme {

/// Numbers in CSV/text output carry 12 significant digits.
inline std::string format_number(double x) {
  if (x == 0.0) x = 0.0;  // no "-0"
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace pmme
