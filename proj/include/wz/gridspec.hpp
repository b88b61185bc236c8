#pragma once

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "wz/errors.hpp"

namespace wz {

namespace detail {

/// Parses "2^-6" style dyadic tokens; returns false for anything else.
[[nodiscard]] inline bool parse_dyadic(const std::string& token, double& out) {
    const auto caret = token.find('^');
    if (caret == std::string::npos || token.substr(0, caret) != "2") return false;
    char* end = nullptr;
    const long e = std::strtol(token.c_str() + caret + 1, &end, 10);
    if (end == token.c_str() + caret + 1 || *end != '\0') return false;
    out = std::ldexp(1.0, static_cast<int>(e));
    return true;
}

[[nodiscard]] inline int dyadic_exponent(const std::string& token) {
    const auto caret = token.find('^');
    if (caret == std::string::npos || token.substr(0, caret) != "2")
        throw lookup_error("grid: range endpoints must be dyadic, got '" + token + "'");
    char* end = nullptr;
    const long e = std::strtol(token.c_str() + caret + 1, &end, 10);
    if (end == token.c_str() + caret + 1 || *end != '\0')
        throw lookup_error("grid: bad dyadic token '" + token + "'");
    return static_cast<int>(e);
}

} // namespace detail

/// Parses a comma-separated list of values where each item is a decimal
/// ("0.04"), a dyadic power ("2^-10"), or a dyadic range ("2^-6..2^-16")
/// expanding one exponent at a time.
[[nodiscard]] inline std::vector<double> parse_value_list(const std::string& spec) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        const auto comma = spec.find(',', pos);
        const std::string token =
            spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        pos = comma == std::string::npos ? spec.size() + 1 : comma + 1;
        if (token.empty()) continue;
        const auto range = token.find("..");
        if (range != std::string::npos) {
            const int a = detail::dyadic_exponent(token.substr(0, range));
            const int b = detail::dyadic_exponent(token.substr(range + 2));
            const int step = a <= b ? 1 : -1;
            for (int e = a;; e += step) {
                values.push_back(std::ldexp(1.0, e));
                if (e == b) break;
            }
            continue;
        }
        double v;
        if (detail::parse_dyadic(token, v)) {
            values.push_back(v);
            continue;
        }
        char* end = nullptr;
        v = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0')
            throw lookup_error("grid: cannot parse value '" + token + "'");
        values.push_back(v);
    }
    if (values.empty()) throw lookup_error("grid: empty value list");
    return values;
}

} // namespace wz
