#include "kdaudit/kv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kdaudit/error.hpp"

namespace kdaudit {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

double parse_double(const std::string& s, const std::string& context) {
    const std::string t = trim(s);
    if (t.empty())
        throw Error(context + ": empty value where a number was expected");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw Error(context + ": invalid number '" + t + "'");
    return v;
}

std::int64_t parse_int(const std::string& s, const std::string& context) {
    const std::string t = trim(s);
    if (t.empty())
        throw Error(context + ": empty value where an integer was expected");
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw Error(context + ": invalid integer '" + t + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& context) {
    const std::int64_t v = parse_int(s, context);
    if (v < 0)
        throw Error(context + ": expected a non-negative integer, got '" + trim(s) + "'");
    return static_cast<std::uint64_t>(v);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ','))
        out.push_back(trim(cur));
    if (!s.empty() && s.back() == ',')
        out.push_back("");
    return out;
}

KvPairs parse_kv_text(const std::string& text) {
    KvPairs out;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t sep = t.find_first_of("=:");
        if (sep == std::string::npos)
            throw Error("line " + std::to_string(lineno) +
                        ": expected 'key = value' or 'key: value', got '" + t + "'");
        out.emplace_back(trim(t.substr(0, sep)), trim(t.substr(sep + 1)));
    }
    return out;
}

KvPairs parse_kv_file(const std::string& path) {
    return parse_kv_text(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad())
        throw Error("I/O failure while reading '" + path + "'");
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out)
        throw Error("I/O failure while writing '" + path + "'");
}

} // namespace kdaudit
