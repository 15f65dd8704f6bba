#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

namespace scifund {

// Per-researcher amount bounds, in budget units.
struct ShareBounds {
    double lower = 0.0;
    double upper = 0.0;
};

struct DetParams {
    double alpha = 0.0;   // exploration fraction
    double lambda = 0.0;  // uniformity of the exploration component
    double gamma = 1.0;   // concentration exponent of the exploitation component
    std::optional<ShareBounds> bounds;

    void validate() const;
};

struct StochParams {
    double alpha = 0.0;
    double tau = 1.0;  // temperature
    std::size_t k = 1;  // winners per round
    double seed_grant = 0.0;
    double gamma_cond = 1.0;  // concentration exponent among winners

    // n = cohort size; the budget bounds the total seed grant.
    void validate(std::size_t n, double budget) const;
};

using ParamSet = std::variant<std::monostate, DetParams, StochParams>;

struct Allocation {
    std::vector<double> shares;
    double budget = 1.0;
    ParamSet params;

    double total() const;
};

}  // namespace scifund
