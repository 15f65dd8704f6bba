#include "scifund/alloc_stoch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scifund/error.hpp"
#include "scifund/rng.hpp"

namespace scifund {

namespace {

void check_scores(std::span<const double> scores) {
    require(!scores.empty(), "scores must not be empty", "scores");
    for (double s : scores) require(std::isfinite(s) && s >= 0.0, "scores must be non-negative", "scores");
}

// Fenwick tree over sampling weights; supports removal and prefix search.
class WeightTree {
public:
    explicit WeightTree(std::span<const double> w) : n_(w.size()), tree_(w.size() + 1, 0.0), w_(w.begin(), w.end()) {
        for (std::size_t i = 0; i < n_; ++i) {
            tree_[i + 1] += w_[i];
            const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
            if (parent <= n_) tree_[parent] += tree_[i + 1];
        }
        for (double v : w_) total_ += v;
        step_ = 1;
        while (step_ * 2 <= n_) step_ *= 2;
    }

    double total() const { return total_; }

    void remove(std::size_t i) {
        const double v = w_[i];
        w_[i] = 0.0;
        total_ -= v;
        for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) tree_[j] -= v;
    }

    // Index whose cumulative interval contains u; skips zero-weight slots
    // that rounding can land on.
    std::size_t find(double u) const {
        std::size_t pos = 0;
        for (std::size_t step = step_; step > 0; step >>= 1) {
            if (pos + step <= n_ && tree_[pos + step] <= u) {
                pos += step;
                u -= tree_[pos];
            }
        }
        for (std::size_t i = pos; i < n_; ++i)
            if (w_[i] > 0.0) return i;
        for (std::size_t i = std::min(pos, n_); i-- > 0;)
            if (w_[i] > 0.0) return i;
        return n_;
    }

private:
    std::size_t n_;
    std::vector<double> tree_;
    std::vector<double> w_;
    double total_ = 0.0;
    std::size_t step_ = 1;
};

}  // namespace

void StochParams::validate(std::size_t n, double budget) const {
    require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]", "alpha");
    require(std::isfinite(tau) && tau > 0.0, "tau must be positive", "tau");
    require(k >= 1, "K must be at least 1", "K");
    require(k <= n, "K must not exceed the cohort size", "K");
    require(std::isfinite(seed_grant) && seed_grant >= 0.0, "seed_grant must be non-negative", "seed_grant");
    require(static_cast<double>(k) * seed_grant <= budget * (1.0 + 1e-12),
            "K * seed_grant must not exceed B", "seed_grant");
    require(std::isfinite(gamma_cond) && gamma_cond > 0.0, "gamma_cond must be positive", "gamma_cond");
}

double inverse_temperature(double alpha, double tau) {
    require(std::isfinite(tau) && tau > 0.0, "tau must be positive", "tau");
    require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]", "alpha");
    if (alpha == 0.0)
        throw Error(ErrorCode::exploit_limit, "pure-exploit limit; use limit policy", "alpha");
    return (1.0 - alpha) / (alpha * tau);
}

LotteryPolicy gibbs_probabilities(std::span<const double> scores, double alpha, double tau) {
    const double beta = inverse_temperature(alpha, tau);
    check_scores(scores);
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(beta * (scores[i] - top));
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= z;
    return {std::move(p), alpha, tau};
}

double objective_value(std::span<const double> p, std::span<const double> scores, double alpha,
                       double tau) {
    require(p.size() == scores.size(), "p and scores differ in length", "p");
    require(!p.empty(), "p must not be empty", "p");
    require(std::isfinite(alpha) && alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]", "alpha");
    require(std::isfinite(tau) && tau > 0.0, "tau must be positive", "tau");
    double total = 0.0;
    for (double v : p) {
        require(std::isfinite(v) && v >= -1e-9, "p has a negative entry", "p");
        total += v;
    }
    require(std::abs(total - 1.0) <= 1e-9, "p is not on the probability simplex", "p");

    const double n = static_cast<double>(p.size());
    double expected = 0.0, kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        expected += p[i] * scores[i];
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] * n);
    }
    return (1.0 - alpha) * expected - alpha * tau * kl;
}

std::vector<std::size_t> draw_lottery(std::span<const double> p, std::size_t k, std::uint64_t rng_seed) {
    require(k >= 1, "K must be at least 1", "K");
    std::size_t positive = 0;
    for (double v : p) {
        require(std::isfinite(v) && v >= 0.0, "probabilities must be non-negative", "p");
        if (v > 0.0) ++positive;
    }
    require(k <= positive, "K exceeds the number of researchers with positive probability", "K");

    WeightTree tree(p);
    Rng rng(rng_seed);
    std::vector<std::size_t> selected;
    selected.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        const std::size_t i = tree.find(rng.uniform01() * tree.total());
        selected.push_back(i);
        tree.remove(i);
    }
    return selected;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
    check_scores(scores);
    require(k >= 1 && k <= scores.size(), "K must lie in [1, N]", "K");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    return order;
}

Allocation allocate_selected(std::span<const std::size_t> selected, std::span<const double> scores,
                             double budget, double seed_grant, double gamma_cond) {
    require(!selected.empty(), "no researchers selected", "selected");
    require(std::isfinite(budget) && budget > 0.0, "budget must be positive", "B");
    require(std::isfinite(gamma_cond) && gamma_cond > 0.0, "gamma_cond must be positive", "gamma_cond");
    require(std::isfinite(seed_grant) && seed_grant >= 0.0, "seed_grant must be non-negative", "seed_grant");
    const double k = static_cast<double>(selected.size());
    require(k * seed_grant <= budget * (1.0 + 1e-12), "K * seed_grant must not exceed B", "seed_grant");

    double top = 0.0;
    for (std::size_t i : selected) {
        require(i < scores.size(), "selected index out of range", "selected");
        require(std::isfinite(scores[i]) && scores[i] >= 0.0, "scores must be non-negative", "scores");
        top = std::max(top, scores[i]);
    }
    std::vector<double> weight(selected.size(), 1.0);
    if (top > 0.0)
        for (std::size_t j = 0; j < selected.size(); ++j) {
            const double unit = scores[selected[j]] / top;
            weight[j] = unit > 0.0 ? std::pow(unit, gamma_cond) : 0.0;
        }
    const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
    const double residual = std::max(0.0, budget - k * seed_grant);

    std::vector<double> amounts(selected.size());
    for (std::size_t j = 0; j < selected.size(); ++j)
        amounts[j] = seed_grant + residual * weight[j] / wsum;
    // Absorb rounding in the residual part only, so no winner drops below the seed.
    const double total = std::accumulate(amounts.begin(), amounts.end(), 0.0);
    const double conditional = total - k * seed_grant;
    if (conditional > 0.0 && total != budget) {
        const double fix = (budget - k * seed_grant) / conditional;
        for (auto& a : amounts) a = seed_grant + (a - seed_grant) * fix;
    }
    return Allocation{std::move(amounts), budget, {}};
}

namespace {

// Successive Gibbs draws. Weights far below the leader underflow to zero; once
// the positive ones are exhausted the rest are drawn from the Gibbs law over the
// researchers still unselected.
std::vector<std::size_t> draw_gibbs(std::span<const double> scores, const StochParams& params,
                                    std::uint64_t rng_seed) {
    std::vector<std::size_t> selected;
    std::vector<std::size_t> left(scores.size());
    std::iota(left.begin(), left.end(), 0);
    for (std::uint64_t round = 0; selected.size() < params.k; ++round) {
        std::vector<double> sub(left.size());
        for (std::size_t j = 0; j < left.size(); ++j) sub[j] = scores[left[j]];
        const auto policy = gibbs_probabilities(sub, params.alpha, params.tau);
        const auto positive = static_cast<std::size_t>(
            std::count_if(policy.probabilities.begin(), policy.probabilities.end(), [](double v) { return v > 0.0; }));
        const std::size_t take = std::min(params.k - selected.size(), positive);
        const auto picks = draw_lottery(policy, take, round == 0 ? rng_seed : split_seed(rng_seed, round));
        std::vector<bool> taken(left.size(), false);
        for (std::size_t j : picks) {
            selected.push_back(left[j]);
            taken[j] = true;
        }
        std::vector<std::size_t> rest;
        for (std::size_t j = 0; j < left.size(); ++j)
            if (!taken[j]) rest.push_back(left[j]);
        left = std::move(rest);
    }
    return selected;
}

}  // namespace

DrawResult run_lottery(std::span<const double> scores, double budget, const StochParams& params,
                       std::uint64_t rng_seed) {
    check_scores(scores);
    params.validate(scores.size(), budget);
    DrawResult out;
    out.rng_seed = rng_seed;
    out.params = params;
    if (params.alpha == 0.0) {
        out.selected = top_k(scores, params.k);
    } else {
        out.selected = draw_gibbs(scores, params, rng_seed);
    }
    const auto funded = allocate_selected(out.selected, scores, budget, params.seed_grant, params.gamma_cond);
    out.allocation.shares.assign(scores.size(), 0.0);
    for (std::size_t j = 0; j < out.selected.size(); ++j)
        out.allocation.shares[out.selected[j]] = funded.shares[j];
    out.allocation.budget = budget;
    out.allocation.params = params;
    return out;
}

}  // namespace scifund
