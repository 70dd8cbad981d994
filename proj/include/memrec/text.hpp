#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
// Trims and replaces every run of whitespace with a single space.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Re-encodes bytes that are not valid UTF-8 as if they were Latin-1.
std::string ensure_utf8(std::string_view bytes);

// Shortest decimal that round-trips; integral values print without a
// fraction ("4"), everything else as-is ("3.5").
std::string format_number(double value);

// Ordering for opaque identifiers: two all-digit ids compare numerically,
// anything else compares bytewise.
bool id_less(std::string_view a, std::string_view b);

std::uint64_t fnv1a64(std::string_view data);
std::uint32_t fnv1a32(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace memrec
