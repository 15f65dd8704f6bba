#include "scifund/error.hpp"

namespace scifund {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::infeasible_bounds: return "infeasible_bounds";
        case ErrorCode::exploit_limit: return "exploit_limit";
        case ErrorCode::malformed_payload: return "malformed_payload";
        case ErrorCode::http_failure: return "http_failure";
        case ErrorCode::network_forbidden: return "network_forbidden";
        case ErrorCode::not_found: return "not_found";
    }
    return "unknown";
}

}  // namespace scifund
