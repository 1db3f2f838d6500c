#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kdaudit {

/// Formats a double with 17 significant digits, enough for an exact
/// round-trip through text.
std::string fmt_double(double v);

std::string fmt_bool(bool v);

/// Strict numeric parsers; throw Error with `context` in the message.
double parse_double(const std::string& s, const std::string& context);
std::int64_t parse_int(const std::string& s, const std::string& context);
std::uint64_t parse_uint(const std::string& s, const std::string& context);

std::string trim(const std::string& s);

/// Splits on commas, trimming each piece. "a, b,c" -> {"a","b","c"}.
std::vector<std::string> split_csv(const std::string& s);

/// Key-value lines in file order. Lines are `key = value` or `key: value`;
/// blank lines and lines starting with '#' are skipped.
using KvPairs = std::vector<std::pair<std::string, std::string>>;
KvPairs parse_kv_text(const std::string& text);
KvPairs parse_kv_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace kdaudit
