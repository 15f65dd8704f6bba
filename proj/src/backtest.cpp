#include "scifund/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <thread>

#include <boost/math/special_functions/erf.hpp>

#include "scifund/alloc_det.hpp"
#include "scifund/alloc_stoch.hpp"
#include "scifund/error.hpp"
#include "scifund/rng.hpp"

namespace scifund {

std::string_view to_string(Mechanism m) {
    return m == Mechanism::deterministic ? "det" : "stoch";
}

double realized_utility(const Allocation& alloc, std::span<const double> outcomes) {
    require(alloc.shares.size() == outcomes.size(), "allocation and outcomes differ in length",
            "outcomes");
    double u = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) u += alloc.shares[i] * outcomes[i];
    return u;
}

namespace {

std::vector<double> unit_steps() {
    std::vector<double> v;
    for (int i = 0; i <= 10; ++i) v.push_back(i / 10.0);
    return v;
}

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

void check_axis(const auto& axis, std::string_view name) {
    require(!axis.empty(), "grid axis '" + std::string(name) + "' is empty", "grid." + std::string(name));
}

void check_cohort(const Cohort& cohort) {
    cohort.validate();
    require(cohort.has_outcomes, "cohort has no outcome column", "cohort");
}

}  // namespace

DetGrid DetGrid::defaults() {
    return {unit_steps(), unit_steps(), {0.5, 1, 2, 4, 8, 16, 32}};
}

void DetGrid::normalize() {
    check_axis(alpha, "alpha");
    check_axis(lambda, "lambda");
    check_axis(gamma, "gamma");
    sort_unique(alpha);
    sort_unique(lambda);
    sort_unique(gamma);
    for (double a : alpha) require(a >= 0.0 && a <= 1.0, "alpha must lie in [0,1]", "grid.alpha");
    for (double l : lambda) require(l >= 0.0 && l <= 1.0, "lambda must lie in [0,1]", "grid.lambda");
    for (double g : gamma) require(std::isfinite(g) && g > 0.0, "gamma must be positive", "grid.gamma");
}

StochGrid StochGrid::defaults(std::size_t n) {
    StochGrid g{unit_steps(), {0.01, 0.05, 0.1, 0.5, 1.0}, {}, {0.0, 0.1}, {1.0}};
    for (std::size_t k : {1, 5, 10, 50, 100})
        if (k <= n) g.k.push_back(k);
    if (g.k.empty()) g.k.push_back(1);
    return g;
}

void StochGrid::normalize(std::size_t n) {
    check_axis(alpha, "alpha");
    check_axis(tau, "tau");
    check_axis(k, "K");
    check_axis(seed_fraction, "seed_fraction");
    check_axis(gamma_cond, "gamma_cond");
    sort_unique(alpha);
    sort_unique(tau);
    sort_unique(k);
    sort_unique(seed_fraction);
    sort_unique(gamma_cond);
    for (double a : alpha) require(a >= 0.0 && a <= 1.0, "alpha must lie in [0,1]", "grid.alpha");
    for (double t : tau) require(std::isfinite(t) && t > 0.0, "tau must be positive", "grid.tau");
    for (std::size_t v : k) require(v >= 1 && v <= n, "K must lie in [1, N]", "grid.K");
    for (double f : seed_fraction)
        require(f >= 0.0 && f <= 1.0, "seed_fraction must lie in [0,1]", "grid.seed_fraction");
    for (double g : gamma_cond)
        require(std::isfinite(g) && g > 0.0, "gamma_cond must be positive", "grid.gamma_cond");
}

namespace {

std::vector<double> param_key(const DetParams& p) { return {p.alpha, p.lambda, p.gamma}; }

std::vector<double> param_key(const StochParams& p) {
    return {p.alpha, p.tau, static_cast<double>(p.k), p.seed_grant, p.gamma_cond};
}

// Utilities within 1e-12 of the maximum tie; the lexicographically smallest
// parameter tuple among them wins.
std::size_t pick_best(const std::vector<BacktestRow>& rows) {
    double top = rows.front().utility;
    for (const auto& r : rows) top = std::max(top, r.utility);
    const double tol = 1e-12 * std::max(1.0, std::abs(top));
    std::size_t best = rows.size();
    std::vector<double> best_key;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].utility < top - tol) continue;
        auto key = std::visit([](const auto& p) { return param_key(p); }, rows[i].params);
        if (best == rows.size() || key < best_key) best = i, best_key = std::move(key);
    }
    return best;
}

}  // namespace

BacktestResult grid_search_det(const Cohort& cohort, double budget, DetGrid grid) {
    check_cohort(cohort);
    grid.normalize();
    const auto s = cohort.scores();
    const auto o = cohort.outcomes();

    BacktestResult out;
    out.mechanism = Mechanism::deterministic;
    out.rows.reserve(grid.size());
    for (double a : grid.alpha)
        for (double l : grid.lambda)
            for (double g : grid.gamma) {
                DetParams params{a, l, g, std::nullopt};
                const auto alloc = allocate_det(s, budget, params);
                out.rows.push_back({params, realized_utility(alloc, o), 0.0});
            }
    out.best = pick_best(out.rows);
    return out;
}

namespace {

// One Monte-Carlo evaluation with the selection policy precomputed.
MonteCarloEstimate estimate(std::span<const double> s, std::span<const double> o, double budget,
                            const StochParams& params, const std::vector<double>* policy,
                            std::size_t n_draws, std::uint64_t root_seed) {
    auto utility_of = [&](const std::vector<std::size_t>& selected) {
        const auto funded = allocate_selected(selected, s, budget, params.seed_grant, params.gamma_cond);
        double u = 0.0;
        for (std::size_t j = 0; j < selected.size(); ++j) u += funded.shares[j] * o[selected[j]];
        return u;
    };

    // Top-K and K = N lotteries pay out the same on every draw.
    if (params.alpha == 0.0) return {utility_of(top_k(s, params.k)), 0.0};
    if (params.k == s.size()) return {utility_of(draw_lottery(*policy, params.k, split_seed(root_seed, 0))), 0.0};

    double mean = 0.0, m2 = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
        const double u = utility_of(draw_lottery(*policy, params.k, split_seed(root_seed, d)));
        const double delta = u - mean;
        mean += delta / static_cast<double>(d + 1);
        m2 += delta * (u - mean);
    }
    const double n = static_cast<double>(n_draws);
    const double se = n_draws > 1 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0;
    return {mean, se};
}

}  // namespace

MonteCarloEstimate mc_expected_utility(const Cohort& cohort, double budget, const StochParams& params,
                                       std::size_t n_draws, std::uint64_t root_seed) {
    check_cohort(cohort);
    require(n_draws >= 1, "n_draws must be at least 1", "n_draws");
    require(std::isfinite(budget) && budget > 0.0, "budget must be positive", "B");
    params.validate(cohort.size(), budget);
    const auto s = cohort.scores();
    const auto o = cohort.outcomes();
    std::vector<double> p;
    if (params.alpha > 0.0) p = gibbs_probabilities(s, params.alpha, params.tau).probabilities;
    return estimate(s, o, budget, params, &p, n_draws, root_seed);
}

BacktestResult optimize_stoch(const Cohort& cohort, double budget, StochGrid grid, std::size_t n_draws,
                              std::uint64_t root_seed, unsigned threads) {
    check_cohort(cohort);
    require(n_draws >= 1, "n_draws must be at least 1", "n_draws");
    require(std::isfinite(budget) && budget > 0.0, "budget must be positive", "B");
    grid.normalize(cohort.size());
    const auto s = cohort.scores();
    const auto o = cohort.outcomes();

    // Policies depend only on (alpha, tau).
    std::vector<std::vector<double>> policies(grid.alpha.size() * grid.tau.size());
    for (std::size_t a = 0; a < grid.alpha.size(); ++a)
        for (std::size_t t = 0; t < grid.tau.size(); ++t)
            if (grid.alpha[a] > 0.0)
                policies[a * grid.tau.size() + t] = gibbs_probabilities(s, grid.alpha[a], grid.tau[t]).probabilities;

    struct Point {
        StochParams params;
        const std::vector<double>* policy;
    };
    std::vector<Point> points;
    points.reserve(grid.size());
    for (std::size_t a = 0; a < grid.alpha.size(); ++a)
        for (std::size_t t = 0; t < grid.tau.size(); ++t)
            for (std::size_t k : grid.k)
                for (double f : grid.seed_fraction)
                    for (double g : grid.gamma_cond) {
                        StochParams params{grid.alpha[a], grid.tau[t], k,
                                           f * budget / static_cast<double>(k), g};
                        params.validate(s.size(), budget);
                        points.push_back({params, &policies[a * grid.tau.size() + t]});
                    }

    BacktestResult out;
    out.mechanism = Mechanism::stochastic;
    out.n_draws = n_draws;
    out.root_seed = root_seed;
    out.rows.resize(points.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                const auto est = estimate(s, o, budget, points[i].params, points[i].policy, n_draws,
                                          split_seed(root_seed, i));
                out.rows[i] = {points[i].params, est.mean, est.std_error};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, points.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    out.best = pick_best(out.rows);
    return out;
}

void SynthSpec::validate() const {
    require(n >= 2, "N must be at least 2", "N");
    require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0,1]", "rho");
    require(std::isfinite(tail_exponent) && tail_exponent > 0.0, "tail exponent must be positive",
            "tail_exponent");
}

namespace {

// Normal scores of the ranks: Phi^-1((rank - 0.5) / n).
std::vector<double> normal_scores(std::span<const double> values) {
    const auto ranks = average_ranks(values);
    const double n = static_cast<double>(values.size());
    std::vector<double> z(values.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (ranks[i] - 0.5) / n);
    return z;
}

}  // namespace

Cohort synth_cohort(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const double inv_shape = 1.0 / spec.tail_exponent;
    std::vector<double> reference(spec.n), noise(spec.n);
    for (auto& x : reference) x = std::pow(rng.uniform_open0(), -inv_shape);
    for (auto& x : noise) x = std::pow(rng.uniform_open0(), -inv_shape);

    // Blend normal scores with the Pearson weight whose Gaussian-copula
    // Spearman correlation equals rho.
    const double r = spec.rho == 1.0 ? 1.0 : 2.0 * std::sin(std::numbers::pi * spec.rho / 6.0);
    const double r_noise = std::sqrt(std::max(0.0, 1.0 - r * r));
    const auto zr = normal_scores(reference);
    const auto zn = normal_scores(noise);
    std::vector<double> future(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double w = r * zr[i] + r_noise * zn[i];
        const double upper_tail = 0.5 * std::erfc(w / std::numbers::sqrt2);
        future[i] = std::pow(std::max(upper_tail, 1e-300), -inv_shape);
    }

    const auto s = percentile_normalize(reference);
    const auto o = percentile_normalize(future);
    const std::size_t width = std::to_string(spec.n).size();
    Cohort c;
    c.label = "synthetic";
    c.members.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        std::string id = std::to_string(i + 1);
        id.insert(0, width - id.size(), '0');
        c.members.push_back({"S" + id, s[i], o[i]});
    }
    return c;
}

}  // namespace scifund
