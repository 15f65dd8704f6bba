#pragma once
// Backtesting of both mechanisms against realized outcomes: utility
// U = sum b_i o_i, grid searches, Monte-Carlo lottery evaluation and a
// synthetic cohort generator.

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "scifund/allocation.hpp"
#include "scifund/cohort.hpp"

namespace scifund {

double realized_utility(const Allocation& alloc, std::span<const double> outcomes);

struct DetGrid {
    std::vector<double> alpha;
    std::vector<double> lambda;
    std::vector<double> gamma;

    // alpha, lambda in {0, 0.1, ..., 1}; gamma in {0.5, 1, 2, ..., 32}
    static DetGrid defaults();
    std::size_t size() const { return alpha.size() * lambda.size() * gamma.size(); }
    // Sorts each axis ascending and checks ranges.
    void normalize();
};

// seed_fraction f gives seed_grant = f * B / K.
struct StochGrid {
    std::vector<double> alpha;
    std::vector<double> tau;
    std::vector<std::size_t> k;
    std::vector<double> seed_fraction;
    std::vector<double> gamma_cond;

    // K values above `n` are dropped.
    static StochGrid defaults(std::size_t n);
    std::size_t size() const {
        return alpha.size() * tau.size() * k.size() * seed_fraction.size() * gamma_cond.size();
    }
    void normalize(std::size_t n);
};

enum class Mechanism { deterministic, stochastic };

std::string_view to_string(Mechanism m);

struct BacktestRow {
    std::variant<DetParams, StochParams> params;
    double utility = 0.0;
    double std_error = 0.0;
};

struct BacktestResult {
    Mechanism mechanism = Mechanism::deterministic;
    std::vector<BacktestRow> rows;
    std::size_t best = 0;
    std::size_t n_draws = 0;  // 0 for the deterministic mechanism
    std::uint64_t root_seed = 0;

    const BacktestRow& best_row() const { return rows.at(best); }
};

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

constexpr std::size_t kDefaultDraws = 1000;

// Rows are in lexicographic grid order. Utilities within 1e-12 of the maximum
// count as tied and the smallest parameter tuple among them wins.
BacktestResult grid_search_det(const Cohort& cohort, double budget, DetGrid grid);

MonteCarloEstimate mc_expected_utility(const Cohort& cohort, double budget, const StochParams& params,
                                       std::size_t n_draws, std::uint64_t root_seed);

// Point i of the grid uses root seed split_seed(root_seed, i). `threads` = 0
// uses the hardware concurrency; the table does not depend on it.
BacktestResult optimize_stoch(const Cohort& cohort, double budget, StochGrid grid, std::size_t n_draws,
                              std::uint64_t root_seed, unsigned threads = 0);

struct SynthSpec {
    std::size_t n = 500;
    double rho = 0.6;            // target Spearman correlation between s and o
    double tail_exponent = 1.5;  // Pareto shape of the latent raw performance
    std::uint64_t seed = 1;

    void validate() const;
};

Cohort synth_cohort(const SynthSpec& spec);

}  // namespace scifund
