#pragma once

// Shortest-exact double formatting shared by the CSV/JSON writers: %.17g
// round-trips every finite double, which keeps reports byte-stable across
// runs with identical numeric state.

#include <cstdio>
#include <string>

namespace conceptdrive::detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace conceptdrive::detail
