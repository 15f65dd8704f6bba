// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "scifund/alloc_det.hpp"
#include "scifund/alloc_stoch.hpp"
#include "scifund/backtest.hpp"
#include "scifund/cli.hpp"
#include "scifund/formats.hpp"
#include "scifund/rng.hpp"
#include "scifund/service.hpp"

using namespace scifund;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s %s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", name, secs, r.detail.c_str());
    std::fflush(stdout);
    if (!r.pass) ++failures;
}

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Outcome budget_conservation() {
    const auto start = Clock::now();
    std::mt19937_64 gen(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    bool negative = false;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + gen() % 200;
        std::vector<double> s(n);
        const double scale = std::pow(10.0, -6.0 + 12.0 * u(gen));
        for (auto& x : s) x = u(gen) < 0.1 ? 0.0 : scale * std::pow(u(gen), 3.0);
        const double budget = std::pow(10.0, -3.0 + 9.0 * u(gen));
        Allocation a;
        if (trial % 2 == 0) {
            DetParams p{u(gen), u(gen), std::pow(2.0, -2.0 + 7.0 * u(gen)), std::nullopt};
            if (u(gen) < 0.5) {
                const double fair = budget / static_cast<double>(n);
                p.bounds = ShareBounds{fair * u(gen), fair * (1.0 + 4.0 * u(gen))};
            }
            a = allocate_det(s, budget, p);
        } else {
            const std::size_t k = 1 + gen() % n;
            StochParams p{u(gen) < 0.2 ? 0.0 : u(gen), 0.01 + u(gen), k,
                          u(gen) * budget / static_cast<double>(k), 0.25 + 4.0 * u(gen)};
            a = run_lottery(s, budget, p, gen()).allocation;
        }
        worst = std::max(worst, std::abs(a.total() - budget) / budget);
        for (double b : a.shares) negative = negative || b < 0.0;
    }
    const double secs = elapsed(start);
    return {worst <= 1e-9 && !negative && secs < 10.0,
            fmt("max rel error %.3g, negative=%g, runtime %.2fs < 10s", worst, negative ? 1 : 0, secs)};
}

Outcome deterministic_limits() {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double prop_err = 0.0, uniform_err = 0.0, scale_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + gen() % 100;
        std::vector<double> s(n);
        for (auto& x : s) x = u(gen);
        const double total = std::accumulate(s.begin(), s.end(), 0.0);
        const auto prop = allocate_det(s, 1.0, {0.0, u(gen), 1.0, std::nullopt});
        for (std::size_t i = 0; i < n; ++i) prop_err = std::max(prop_err, std::abs(prop.shares[i] - s[i] / total));
        const auto flat = allocate_det(s, 1.0, {1.0, 1.0, 1.0 + 8.0 * u(gen), std::nullopt});
        for (double b : flat.shares) uniform_err = std::max(uniform_err, std::abs(b - 1.0 / static_cast<double>(n)));

        const DetParams p{u(gen), u(gen), 0.5 + 10.0 * u(gen), std::nullopt};
        const auto ref = allocate_det(s, 1.0, p);
        for (double c : {1e-6, 1.0, 1e6}) {
            std::vector<double> scaled(s);
            for (auto& x : scaled) x *= c;
            const auto a = allocate_det(scaled, 1.0, p);
            for (std::size_t i = 0; i < n; ++i) scale_err = std::max(scale_err, std::abs(a.shares[i] - ref.shares[i]));
        }
    }
    return {prop_err <= 1e-12 && uniform_err <= 1e-12 && scale_err <= 1e-12,
            fmt("proportional %.3g, uniform %.3g, scale %.3g (tol 1e-12)", prop_err, uniform_err, scale_err)};
}

Outcome gibbs_optimality() {
    const auto start = Clock::now();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr int grid = 200;
    double worst_gap = -1e300;
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> s{u(gen), u(gen), u(gen)};
        const double alpha = 0.01 + 0.99 * u(gen);
        const double tau = std::pow(10.0, -2.0 + 2.0 * u(gen));
        const auto p = gibbs_probabilities(s, alpha, tau).probabilities;
        const double best = objective_value(p, s, alpha, tau);
        for (int i = 0; i < grid; ++i)
            for (int j = 0; i + j < grid; ++j) {
                const double a = static_cast<double>(i) / (grid - 1);
                const double b = static_cast<double>(j) / (grid - 1);
                const std::vector<double> q{a, b, std::max(0.0, 1.0 - a - b)};
                worst_gap = std::max(worst_gap, objective_value(q, s, alpha, tau) - best);
            }
    }
    const double secs = elapsed(start);
    return {worst_gap <= 1e-9 && secs < 60.0,
            fmt("max grid excess %.3g (slack 1e-9), runtime %.2fs < 60s", worst_gap, secs)};
}

Outcome sampler_statistics() {
    std::vector<double> p(10);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(i + 1);
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= z;

    constexpr int draws = 100000;
    std::vector<double> freq(p.size(), 0.0);
    for (int d = 0; d < draws; ++d) freq[draw_lottery(p, 3, split_seed(1, d)).front()] += 1.0 / draws;
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += 0.5 * std::abs(freq[i] - p[i]);

    const std::vector<double> p3{0.5, 0.3, 0.2};
    const double exact = 0.5 * 0.3 / 0.5 + 0.3 * 0.5 / 0.7;
    int pair = 0;
    for (int d = 0; d < draws; ++d) {
        auto w = draw_lottery(p3, 2, split_seed(2, d));
        if (std::min(w[0], w[1]) == 0 && std::max(w[0], w[1]) == 1) ++pair;
    }
    const double emp = static_cast<double>(pair) / draws;
    return {tv <= 0.01 && std::abs(emp - 0.514286) <= 0.01 && std::abs(exact - 0.514286) < 1e-6,
            fmt("TV %.4f <= 0.01; P({0,1}) %.4f vs %.6f +-0.01", tv, emp, exact)};
}

Outcome qualitative_reproduction() {
    const auto start = Clock::now();
    const auto cohort = synth_cohort({500, 0.8, 1.5, 20240601});
    const auto det = grid_search_det(cohort, 1.0, DetGrid::defaults());
    const auto& best = std::get<DetParams>(det.best_row().params);
    bool monotone = true;
    std::string utilities;
    double last = -1.0;
    for (const auto& row : det.rows) {
        const auto& p = std::get<DetParams>(row.params);
        if (p.alpha != 0.0 || p.lambda != 0.0) continue;
        monotone = monotone && row.utility >= last;
        last = row.utility;
        utilities += fmt("%.4f ", row.utility);
    }
    const auto stoch = optimize_stoch(cohort, 1.0, StochGrid::defaults(cohort.size()), kDefaultDraws, 20240601);
    const auto& sbest = std::get<StochParams>(stoch.best_row().params);
    const double secs = elapsed(start);
    const bool ok = best.alpha == 0.0 && best.lambda == 0.0 && monotone && sbest.alpha == 0.0 && sbest.k <= 10 &&
                    secs < 120.0;
    std::string detail = "det best alpha=" + format_decimal(best.alpha) + " lambda=" + format_decimal(best.lambda) +
                         " gamma=" + format_decimal(best.gamma) + "; U(gamma) = " + utilities +
                         "; stoch best alpha=" + format_decimal(sbest.alpha) + " K=" + std::to_string(sbest.k) +
                         " U=" + format_decimal(stoch.best_row().utility) + fmt("; runtime %.2fs < 120s", secs);
    return {ok, detail};
}

Outcome percentile_pipeline() {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    int mean_misses = 0, transform_misses = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + gen() % 2000;
        std::vector<double> v(n);
        for (auto& x : v) x = gen() % 4 == 0 ? std::round(u(gen)) : u(gen);
        const auto p = percentile_normalize(v);
        if (column_mean(p) != 0.5) ++mean_misses;
        std::vector<double> t(n);
        std::transform(v.begin(), v.end(), t.begin(), [](double x) { return std::exp(x) * 3.0 - 7.0; });
        if (percentile_normalize(t) != p) ++transform_misses;
    }
    // Percentile columns of a built cohort.
    const auto cohort = synth_cohort({777, 0.5, 1.5, 4});
    const auto s = cohort.scores();
    const auto o = cohort.outcomes();
    if (column_mean(s) != 0.5 || column_mean(o) != 0.5) ++mean_misses;
    const bool self = spearman(s, s) == 1.0 && spearman(o, o) == 1.0;
    return {mean_misses == 0 && transform_misses == 0 && self,
            fmt("mean != 0.5 in %g columns, transform mismatches %g / 1000, spearman self = 1: %g", mean_misses,
                transform_misses, self ? 1 : 0)};
}

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string printed_seed(const std::string& err) {
    const auto pos = err.find("seed: ");
    if (pos == std::string::npos) return {};
    return err.substr(pos + 6, err.find('\n', pos) - pos - 6);
}

Outcome reproducibility() {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "scifund_acceptance";
    fs::remove_all(dir);
    std::vector<std::string> failed;

    // CLI: run unseeded, then replay with the printed seed into a fresh directory.
    auto replay = [&](const std::string& name, std::vector<std::string> args, const std::vector<std::string>& files) {
        const auto first = dir / (name + "_1"), second = dir / (name + "_2");
        auto a = args;
        a.insert(a.begin(), {"--output-dir", first.string()});
        const auto r1 = cli(a);
        const auto seed = printed_seed(r1.err);
        auto b = args;
        b.insert(b.begin(), {"--output-dir", second.string(), "--seed", seed});
        const auto r2 = cli(b);
        bool same = r1.code == 0 && r2.code == 0 && !seed.empty() && printed_seed(r2.err) == seed;
        for (const auto& f : files) same = same && read_text(first / f) == read_text(second / f);
        if (!same) failed.push_back(name);
    };
    replay("synth", {"synth", "--n", "200", "--rho", "0.7"}, {"cohort.csv"});
    const auto cohort_csv = (dir / "synth_1" / "cohort.csv").string();
    replay("lottery", {"lottery", "--draw", "--k", "5", "--alpha", "0.3", "--tau", "0.1", "--seed-grant", "0.01",
                       "--scores-file", cohort_csv},
           {"draw.csv", "draw.json"});
    replay("lottery_limit", {"lottery", "--draw", "--k", "5", "--alpha", "0", "--scores-file", cohort_csv},
           {"draw.csv", "draw.json"});
    replay("backtest", {"backtest", "--mechanism", "stoch", "--cohort", cohort_csv, "--alpha-grid", "0,0.5",
                        "--tau-grid", "0.1,1", "--k-grid", "1,5", "--n-draws", "100"},
           {"backtest.csv", "backtest.summary.json"});
    replay("synth_json", {"--format", "json", "synth", "--n", "50"}, {"cohort.json"});

    // Service: unseeded request, then the same body with the returned seed.
    Service service({});
    const json draw = {{"cohort_csv", read_text(cohort_csv)},
                       {"params", {{"alpha", 0.4}, {"tau", 0.2}, {"K", 10}, {"seed_grant", 0.01}}}};
    const auto d1 = service.handle("POST", "/v1/lottery/draw", draw.dump());
    json seeded = draw;
    seeded["rng_seed"] = json::parse(d1.body)["rng_seed"];
    if (d1.status != 200 || service.handle("POST", "/v1/lottery/draw", seeded.dump()).body != d1.body)
        failed.push_back("service draw");

    const json bt = {{"cohort_csv", read_text(cohort_csv)}, {"mechanism", "stoch"}, {"n_draws", 200},
                     {"grid", {{"alpha", {0, 0.3}}, {"tau", {0.1}}, {"K", {5, 10}}, {"seed_fraction", {0, 0.1}}}}};
    const auto b1 = service.handle("POST", "/v1/backtest/grid", bt.dump());
    json bt_seeded = bt;
    bt_seeded["root_seed"] = json::parse(b1.body)["root_seed"];
    if (b1.status != 200 || Service({}).handle("POST", "/v1/backtest/grid", bt_seeded.dump()).body != b1.body)
        failed.push_back("service backtest");

    fs::remove_all(dir);
    std::string detail = "7 stochastic outputs replayed";
    for (const auto& f : failed) detail += "; mismatch: " + f;
    return {failed.empty(), detail};
}

}  // namespace

int main() {
    criterion("budget-conservation", budget_conservation);
    criterion("deterministic-limits", deterministic_limits);
    criterion("gibbs-optimality", gibbs_optimality);
    criterion("lottery-sampler-statistics", sampler_statistics);
    criterion("qualitative-reproduction", qualitative_reproduction);
    criterion("percentile-pipeline", percentile_pipeline);
    criterion("reproducibility", reproducibility);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
