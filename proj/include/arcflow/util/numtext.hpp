#pragma once

// Shortest round-trip decimal text for doubles.

#include <string>
#include <string_view>

namespace arcflow::util {

std::string format_double(double v);
/// Parses the whole of `text`; throws std::invalid_argument otherwise.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace arcflow::util
