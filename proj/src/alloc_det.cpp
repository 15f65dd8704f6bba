#include "scifund/alloc_det.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scifund/error.hpp"

namespace scifund {

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void check_bounds_shape(double lower, double upper) {
    if (!(std::isfinite(lower) && std::isfinite(upper) && lower >= 0.0 && lower <= upper))
        throw Error(ErrorCode::invalid_argument, "bounds require 0 <= lower <= upper", "bounds");
}

void renormalize(std::vector<double>& b, double budget) {
    const double total = std::accumulate(b.begin(), b.end(), 0.0);
    if (total > 0.0)
        for (auto& v : b) v *= budget / total;
}

}  // namespace

double Allocation::total() const { return std::accumulate(shares.begin(), shares.end(), 0.0); }

void DetParams::validate() const {
    require(in_unit(alpha), "alpha must lie in [0,1]", "alpha");
    require(in_unit(lambda), "lambda must lie in [0,1]", "lambda");
    require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive", "gamma");
    if (bounds) check_bounds_shape(bounds->lower, bounds->upper);
}

Allocation allocate_det(std::span<const double> scores, double budget, const DetParams& params) {
    params.validate();
    require(!scores.empty(), "scores must not be empty", "scores");
    require(std::isfinite(budget) && budget > 0.0, "budget must be positive", "B");
    for (double s : scores) require(std::isfinite(s) && s >= 0.0, "scores must be non-negative", "scores");

    const std::size_t n = scores.size();
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> b(n, budget / static_cast<double>(n));

    if (top > 0.0) {
        // Dividing by the maximum keeps s^gamma representable and makes the
        // rule exactly invariant to rescaling the scores.
        std::vector<double> unit(n), powered(n);
        for (std::size_t i = 0; i < n; ++i) {
            unit[i] = scores[i] / top;
            powered[i] = unit[i] > 0.0 ? std::pow(unit[i], params.gamma) : 0.0;
        }
        const double sum_unit = std::accumulate(unit.begin(), unit.end(), 0.0);
        const double sum_pow = std::accumulate(powered.begin(), powered.end(), 0.0);
        const double explore = params.alpha * budget;
        const double exploit = (1.0 - params.alpha) * budget;
        const double uniform = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            b[i] = explore * (params.lambda * uniform + (1.0 - params.lambda) * unit[i] / sum_unit) +
                   exploit * powered[i] / sum_pow;
        renormalize(b, budget);
    }

    Allocation out{std::move(b), budget, params};
    if (params.bounds) {
        out = apply_bounds(out, params.bounds->lower, params.bounds->upper);
        out.params = params;
    }
    return out;
}

Allocation apply_bounds(const Allocation& alloc, double lower, double upper) {
    check_bounds_shape(lower, upper);
    const std::size_t n = alloc.shares.size();
    require(n > 0, "allocation is empty", "shares");
    const double budget = alloc.budget;
    const double nn = static_cast<double>(n);
    const double slack = 1e-12 * budget;
    if (nn * lower > budget + slack || nn * upper < budget - slack)
        throw Error(ErrorCode::infeasible_bounds,
                    "infeasible bounds: need N*lower <= B <= N*upper", "bounds");

    std::vector<double> out(n, 0.0);
    std::vector<bool> frozen(n, false);
    for (std::size_t pass = 0; pass <= n; ++pass) {
        double residual = budget;
        double weight = 0.0;
        std::size_t open = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (frozen[i]) {
                residual -= out[i];
            } else {
                weight += alloc.shares[i];
                ++open;
            }
        }
        if (open == 0) break;

        // Unfrozen researchers share the residual proportionally (uniformly
        // when they all hold zero).
        const bool flat = weight <= 0.0;
        const double scale = flat ? residual / static_cast<double>(open) : residual / weight;
        double excess = 0.0, deficit = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (frozen[i]) continue;
            out[i] = flat ? scale : scale * alloc.shares[i];
            excess += std::max(0.0, out[i] - upper);
            deficit += std::max(0.0, lower - out[i]);
        }
        if (excess == 0.0 && deficit == 0.0) break;

        // Clamping the side with the larger violation first never freezes a
        // researcher that the final scale would leave inside the bounds.
        const bool clamp_upper = excess >= deficit;
        const bool clamp_lower = deficit >= excess;
        for (std::size_t i = 0; i < n; ++i) {
            if (frozen[i]) continue;
            if (clamp_upper && out[i] > upper) {
                out[i] = upper;
                frozen[i] = true;
            } else if (clamp_lower && out[i] < lower) {
                out[i] = lower;
                frozen[i] = true;
            }
        }
    }
    return Allocation{std::move(out), budget, alloc.params};
}

std::vector<CurvePoint> allocation_curve(const DetParams& params, std::size_t grid_points,
                                         double budget) {
    require(grid_points >= 2, "grid_points must be at least 2", "grid_points");
    std::vector<double> scores(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
        scores[i] = static_cast<double>(i) / static_cast<double>(grid_points - 1);
    const auto alloc = allocate_det(scores, budget, params);
    std::vector<CurvePoint> out(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i) out[i] = {scores[i], alloc.shares[i]};
    return out;
}

double gini(std::span<const double> shares) {
    require(!shares.empty(), "gini of an empty vector");
    std::vector<double> x(shares.begin(), shares.end());
    std::sort(x.begin(), x.end());
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    if (total <= 0.0) return 0.0;
    const double n = static_cast<double>(x.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
    return acc / (n * total);
}

double top_decile_share(std::span<const double> shares) {
    require(!shares.empty(), "top_decile_share of an empty vector");
    std::vector<double> x(shares.begin(), shares.end());
    std::sort(x.begin(), x.end(), std::greater<>());
    const std::size_t top = (x.size() + 9) / 10;
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    if (total <= 0.0) return 0.0;
    return std::accumulate(x.begin(), x.begin() + static_cast<long>(top), 0.0) / total;
}

}  // namespace scifund
