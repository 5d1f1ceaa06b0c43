#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace edgetree {

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

// Like format_double but always a valid C floating literal ("3" -> "3.0").
std::string format_c_double(double value);

// Strict full-string parse; surrounding ASCII whitespace is tolerated.
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view text);

}  // namespace edgetree
