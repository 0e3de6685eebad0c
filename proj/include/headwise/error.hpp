#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace headwise {

enum class ErrorKind {
    ParseError,
    InvalidSpec,
    UnresolvedPolicy,
    UnsupportedPolicy,
    CapacityExceeded,
    Infeasible,
    ShapeMismatch,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnresolvedPolicy: return "UnresolvedPolicy";
    case ErrorKind::UnsupportedPolicy: return "UnsupportedPolicy";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    }
    return "Unknown";
}

// Every failure in the library surfaces as this exception; kind() is the
// machine-readable category the CLI maps to exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

} // namespace headwise
