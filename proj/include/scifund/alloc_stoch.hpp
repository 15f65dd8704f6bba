#pragma once
// Biased lottery: Gibbs selection probabilities from the KL-regularized
// objective, K winners drawn by successive sampling without replacement,
// then a seed grant plus a concentration rule over the winners.

#include <cstdint>
#include <span>
#include <vector>

#include "scifund/allocation.hpp"
#include "scifund/cohort.hpp"

namespace scifund {

struct LotteryPolicy {
    std::vector<double> probabilities;
    double alpha = 0.0;
    double tau = 1.0;
};

// beta = (1 - alpha) / (alpha * tau)
double inverse_temperature(double alpha, double tau);

// p_i proportional to exp(beta * s_i). alpha = 0 throws Error(exploit_limit).
LotteryPolicy gibbs_probabilities(std::span<const double> scores, double alpha, double tau);

// (1 - alpha) * <p, s> - alpha * tau * KL(p || uniform)
double objective_value(std::span<const double> p, std::span<const double> scores, double alpha,
                       double tau);

// Plackett-Luce: draw from p, remove the winner, renormalize, repeat.
std::vector<std::size_t> draw_lottery(std::span<const double> p, std::size_t k, std::uint64_t rng_seed);

inline std::vector<std::size_t> draw_lottery(const LotteryPolicy& policy, std::size_t k,
                                             std::uint64_t rng_seed) {
    return draw_lottery(policy.probabilities, k, rng_seed);
}

// Pure-exploit limit (alpha = 0): the k highest scores, ties to the lower index.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

// Amounts aligned with `selected`: seed_grant each, plus the residual
// B - K*seed_grant split proportionally to s^gamma_cond among the winners.
Allocation allocate_selected(std::span<const std::size_t> selected, std::span<const double> scores,
                             double budget, double seed_grant, double gamma_cond);

struct DrawResult {
    std::vector<std::size_t> selected;
    std::uint64_t rng_seed = 0;
    StochParams params;
    Allocation allocation;  // full cohort length, zero for non-winners
};

DrawResult run_lottery(std::span<const double> scores, double budget, const StochParams& params,
                       std::uint64_t rng_seed);

inline DrawResult run_lottery(const Cohort& cohort, double budget, const StochParams& params,
                              std::uint64_t rng_seed) {
    const auto s = cohort.scores();
    return run_lottery(s, budget, params, rng_seed);
}

}  // namespace scifund
