#pragma once

#include <stdexcept>
#include <string>

namespace kdaudit {

/// Thrown on any validation, parse, or I/O failure. The message is meant to
/// be shown to the user verbatim (line numbers, offending ids, etc.).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace kdaudit
