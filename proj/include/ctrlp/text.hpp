#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctrlp::text {

// Shortest round-trip representation.
std::string format_double(double value);

// Strict parsers; throw UsageError naming `what` on malformed input.
double parse_double(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);
bool parse_on_off(std::string_view s, std::string_view what);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

} // namespace ctrlp::text
