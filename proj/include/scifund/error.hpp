#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scifund {

enum class ErrorCode {
    invalid_argument,
    infeasible_bounds,
    exploit_limit,
    malformed_payload,
    http_failure,
    network_forbidden,
    not_found,
};

std::string_view to_string(ErrorCode code);

// Library-wide exception. `field` names the offending input when one exists.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string field = {})
        : std::runtime_error(message), code_(code), field_(std::move(field)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }

private:
    ErrorCode code_;
    std::string field_;
};

[[noreturn]] inline void fail(const std::string& message, std::string field = {}) {
    throw Error(ErrorCode::invalid_argument, message, std::move(field));
}

inline void require(bool ok, const std::string& message, std::string field = {}) {
    if (!ok) fail(message, std::move(field));
}

}  // namespace scifund
