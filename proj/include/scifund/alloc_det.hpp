#pragma once
// Deterministic explore/exploit allocation.
//
//   b_i = alpha*B*(lambda/N + (1-lambda)*s_i/sum(s)) + (1-alpha)*B*s_i^gamma/sum(s^gamma)
//
// followed by optional per-researcher bounds.

#include <cstddef>
#include <span>
#include <vector>

#include "scifund/allocation.hpp"

namespace scifund {

// All-zero scores fall back to a uniform split. Bounds in `params` are
// applied after both components are combined.
Allocation allocate_det(std::span<const double> scores, double budget, const DetParams& params);

// Clamp-freeze-redistribute projection onto [lower, upper]^N with sum B.
// Throws Error(infeasible_bounds) unless N*lower <= B <= N*upper.
Allocation apply_bounds(const Allocation& alloc, double lower, double upper);

struct CurvePoint {
    double score = 0.0;
    double share = 0.0;
};

// Shares of a synthetic cohort whose scores are an even grid on [0,1].
std::vector<CurvePoint> allocation_curve(const DetParams& params, std::size_t grid_points,
                                         double budget = 1.0);

double gini(std::span<const double> shares);

// Fraction of the total held by the top ceil(N/10) recipients.
double top_decile_share(std::span<const double> shares);

}  // namespace scifund
