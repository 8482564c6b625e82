#include "adnl/text.hpp"

#include <charconv>
#include <stdexcept>

namespace adnl::text {
namespace {

[[noreturn]] void bad(std::string_view s, std::string_view what, const char* expected) {
  throw std::invalid_argument(std::string(what) + ": expected " + expected + ", got '" + std::string(s) + "'");
}

template <typename T>
T parse_number(std::string_view raw, std::string_view what, const char* expected) {
  const std::string s = trim(raw);
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) bad(raw, what, expected);
  return v;
}

}  // namespace

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(std::string_view s, std::string_view what) { return parse_number<int>(s, what, "an integer"); }

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  return parse_number<std::uint64_t>(s, what, "a non-negative integer");
}

double parse_double(std::string_view s, std::string_view what) { return parse_number<double>(s, what, "a number"); }

bool parse_bool(std::string_view raw, std::string_view what) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(raw, what, "true or false");
}

Shape parse_shape(std::string_view raw, std::string_view what) {
  const std::string s = trim(raw);
  Shape out;
  std::size_t start = 0;
  while (true) {
    const auto x = s.find('x', start);
    out.push_back(parse_number<int>(std::string_view(s).substr(start, x - start), what, "a shape like 3x64x64"));
    if (out.back() <= 0) bad(raw, what, "positive dimensions");
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

}  // namespace adnl::text
