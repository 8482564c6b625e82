#pragma once

// Strict scalar parsing and round-trip formatting for config and checkpoint
// text. Each parser rejects trailing garbage.

#include <cstdint>
#include <string>
#include <string_view>

#include "adnl/tensor.hpp"

namespace adnl::text {

int parse_int(std::string_view s, std::string_view what);
std::uint64_t parse_u64(std::string_view s, std::string_view what);
double parse_double(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);
// "3x64x64"
Shape parse_shape(std::string_view s, std::string_view what);

// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string format_shape(const Shape& shape);
std::string trim(std::string_view s);

}  // namespace adnl::text
