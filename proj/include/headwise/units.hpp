#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "headwise/error.hpp"

namespace headwise {

using Bytes = std::uint64_t;
using Tokens = std::uint64_t;

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

constexpr double to_gib(Bytes b) noexcept { return static_cast<double>(b) / static_cast<double>(kGiB); }
constexpr double to_gib(double b) noexcept { return b / static_cast<double>(kGiB); }

inline Bytes gib(double value) { return static_cast<Bytes>(std::llround(value * static_cast<double>(kGiB))); }

// Token counts: plain integers, or K / M suffixes meaning x1024 and x1024^2.
inline Tokens parse_tokens(std::string_view text) {
    if (text.empty()) {
        throw Error(ErrorKind::ParseError, "empty token count");
    }
    Tokens scale = 1;
    switch (text.back()) {
    case 'K':
    case 'k':
        scale = 1024;
        text.remove_suffix(1);
        break;
    case 'M':
    case 'm':
        scale = 1024 * 1024;
        text.remove_suffix(1);
        break;
    default: break;
    }
    Tokens value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw Error(ErrorKind::ParseError, "bad token count '" + std::string(text) + "'");
    }
    return value * scale;
}

// Byte quantities must carry an explicit GiB suffix; decimals allowed ("4.7GiB").
inline Bytes parse_gib(std::string_view text) {
    constexpr std::string_view suffix = "GiB";
    if (text.size() <= suffix.size() || text.substr(text.size() - suffix.size()) != suffix) {
        throw Error(ErrorKind::ParseError, "byte quantity '" + std::string(text) + "' must end in GiB");
    }
    const std::string number(text.substr(0, text.size() - suffix.size()));
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(number, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != number.size() || !(value >= 0.0) || !std::isfinite(value)) {
        throw Error(ErrorKind::ParseError, "bad byte quantity '" + std::string(text) + "'");
    }
    return gib(value);
}

} // namespace headwise
