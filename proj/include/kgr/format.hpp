#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/errors.hpp"

namespace kgr {

// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw ComputeError("failed to format double");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(context + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, const std::string& context) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(context + ": bad integer '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace kgr
