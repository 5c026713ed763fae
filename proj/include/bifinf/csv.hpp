#pragma once

#include <cstdio>
#include <string>

namespace bifinf {

/// Fixed-format number for CSV and report output.
inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

}  // namespace bifinf
