#include "scifund/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <random>

#include <CLI11.hpp>

#include "scifund/alloc_det.hpp"
#include "scifund/alloc_stoch.hpp"
#include "scifund/backtest.hpp"
#include "scifund/dataset.hpp"
#include "scifund/error.hpp"
#include "scifund/formats.hpp"
#include "scifund/openalex.hpp"

namespace scifund {

using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::string output_dir;
    std::string format = "csv";
};

struct Context {
    const Globals& g;
    std::ostream& out;
    std::ostream& err;

    bool json_format() const { return g.format == "json"; }

    // Explicit seed, or a fresh one below 2^53; always reported on stderr.
    std::uint64_t effective_seed() const {
        std::uint64_t seed = g.seed;
        if (g.seed_opt->count() == 0) {
            std::random_device rd;
            seed = ((static_cast<std::uint64_t>(rd()) << 32) ^ rd()) & ((1ULL << 53) - 1);
        }
        err << "seed: " << seed << '\n';
        return seed;
    }

    // Writes into --output-dir when given, else to stdout.
    void emit(const std::string& name, const std::string& content) const {
        if (g.output_dir.empty()) {
            out << content;
            return;
        }
        const auto path = std::filesystem::path(g.output_dir) / name;
        write_text(path, content);
        err << "wrote " << path.string() << '\n';
    }

    void save(const std::string& name, const std::string& content) const {
        if (g.output_dir.empty()) return;
        const auto path = std::filesystem::path(g.output_dir) / name;
        write_text(path, content);
        err << "wrote " << path.string() << '\n';
    }
};

struct ScoreInput {
    std::string scores;
    std::string scores_file;
    std::vector<std::string> ids;
    std::vector<double> values;

    void add(CLI::App* sub) {
        auto* a = sub->add_option("--scores", scores, "comma-separated scores");
        auto* b = sub->add_option("--scores-file", scores_file, "cohort CSV (researcher_id,s[,o])");
        a->excludes(b);
    }

    void load() {
        if (!scores_file.empty()) {
            const auto cohort = cohort_from_csv(read_text(scores_file), scores_file);
            ids = cohort.ids();
            values = cohort.scores();
        } else if (!scores.empty()) {
            values = parse_decimal_list(scores, "--scores");
            ids.clear();
            for (std::size_t i = 0; i < values.size(); ++i) ids.push_back(std::to_string(i));
        } else {
            throw CLI::RequiredError("--scores or --scores-file");
        }
    }
};

std::string fixed6(std::span<const double> values) {
    std::string line;
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", values[i]);
        if (i) line += ',';
        line += buf;
    }
    return line + '\n';
}

json cohort_to_json(const Cohort& c) {
    json ids = json::array(), s = json::array(), o = json::array();
    for (const auto& m : c.members) {
        ids.push_back(m.researcher_id);
        s.push_back(format_decimal(m.s));
        o.push_back(format_decimal(m.o));
    }
    json j = {{"researcher_ids", ids}, {"s", s}};
    if (c.has_outcomes) j["o"] = o;
    return j;
}

void emit_cohort(const Context& ctx, const Cohort& cohort) {
    if (ctx.json_format())
        ctx.emit("cohort.json", cohort_to_json(cohort).dump(2) + '\n');
    else
        ctx.emit("cohort.csv", cohort_to_csv(cohort));
}

Cohort load_cohort(const std::string& path) {
    const auto text = read_text(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const auto j = json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::malformed_payload, "invalid cohort JSON", path);
        Cohort c;
        c.label = path;
        const auto& ids = j.at("researcher_ids");
        const auto& s = j.at("s");
        c.has_outcomes = j.contains("o");
        require(ids.size() == s.size() && (!c.has_outcomes || j["o"].size() == s.size()),
                "cohort columns differ in length", path);
        for (std::size_t i = 0; i < s.size(); ++i)
            c.members.push_back({ids[i].get<std::string>(), json_decimal(s[i], "s"),
                                 c.has_outcomes ? json_decimal(j["o"][i], "o") : 0.0});
        c.validate();
        return c;
    }
    return cohort_from_csv(text, path);
}

json read_json_file(const std::string& path) {
    const auto j = json::parse(read_text(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::malformed_payload, "expected a JSON object", path);
    return j;
}

bool network_disabled() {
    const char* v = std::getenv("NO_NETWORK");
    return v && *v && std::string_view(v) != "0";
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Research funding allocation: cohorts, allocation rules, lotteries and backtests", "scifund"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "RNG seed for stochastic subcommands");
    app.add_option("--output-dir", g.output_dir, "write result files here instead of stdout");
    app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}));

    // ingest
    auto* ingest = app.add_subcommand("ingest", "fetch works from OpenAlex or load a dataset file");
    std::string ingest_id, ingest_input, base_url = FetchConfig{}.base_url, cache_dir, institute, mailto;
    auto* o_id = ingest->add_option("--openalex", ingest_id, "author (A...) or institution (I...) id");
    auto* o_in = ingest->add_option("--input", ingest_input, "dataset JSON file")->check(CLI::ExistingFile);
    o_id->excludes(o_in);
    ingest->add_option("--base-url", base_url, "API base URL");
    ingest->add_option("--cache-dir", cache_dir, "response cache directory");
    ingest->add_option("--institute", institute, "institute label for author fetches");
    ingest->add_option("--mailto", mailto, "contact address sent with requests");

    // cohort
    auto* cohort_cmd = app.add_subcommand("cohort", "build a cohort from a dataset");
    std::string dataset_path;
    int year = 0, ref_start = 0, ref_end = 0, fut_start = 0, fut_end = 0;
    bool single = false;
    cohort_cmd->add_option("--dataset", dataset_path, "dataset JSON file")->required()->check(CLI::ExistingFile);
    auto* o_year = cohort_cmd->add_option("--year", year, "split year Y: reference [Y-5,Y-1], future [Y,Y+4]");
    auto* o_rs = cohort_cmd->add_option("--ref-start", ref_start, "reference window start year");
    auto* o_re = cohort_cmd->add_option("--ref-end", ref_end, "reference window end year");
    auto* o_fs = cohort_cmd->add_option("--future-start", fut_start, "future window start year");
    auto* o_fe = cohort_cmd->add_option("--future-end", fut_end, "future window end year");
    for (auto* o : {o_rs, o_re, o_fs, o_fe}) o->excludes(o_year);
    cohort_cmd->add_flag("--single-institute", single, "require one institute instead of pooling");

    // allocate
    auto* allocate = app.add_subcommand("allocate", "deterministic shares");
    ScoreInput alloc_scores;
    alloc_scores.add(allocate);
    double alloc_budget = 1.0;
    DetParams det;
    double lower = 0.0, upper = 0.0;
    std::string alloc_params_file;
    allocate->add_option("--budget", alloc_budget, "total budget B");
    auto* o_alpha = allocate->add_option("--alpha", det.alpha, "exploration fraction");
    auto* o_lambda = allocate->add_option("--lambda", det.lambda, "uniform part of exploration");
    auto* o_gamma = allocate->add_option("--gamma", det.gamma, "concentration exponent");
    auto* o_lower = allocate->add_option("--lower", lower, "per-researcher lower bound (budget units)");
    auto* o_upper = allocate->add_option("--upper", upper, "per-researcher upper bound (budget units)");
    o_lower->needs(o_upper);
    o_upper->needs(o_lower);
    allocate->add_option("--params-file", alloc_params_file, "JSON parameters; flags override")
        ->check(CLI::ExistingFile);

    // lottery
    auto* lottery = app.add_subcommand("lottery", "Gibbs probabilities or a seeded draw");
    ScoreInput lot_scores;
    lot_scores.add(lottery);
    bool draw = false;
    double lot_budget = 1.0;
    StochParams stoch;
    std::string lot_params_file;
    lottery->add_flag("--draw", draw, "draw winners instead of printing probabilities");
    lottery->add_option("--budget", lot_budget, "total budget B");
    auto* l_alpha = lottery->add_option("--alpha", stoch.alpha, "exploration weight");
    auto* l_tau = lottery->add_option("--tau", stoch.tau, "temperature");
    auto* l_k = lottery->add_option("--k", stoch.k, "winners per round");
    auto* l_seed_grant = lottery->add_option("--seed-grant", stoch.seed_grant, "fixed amount per winner");
    auto* l_gamma = lottery->add_option("--gamma-cond", stoch.gamma_cond, "concentration among winners");
    lottery->add_option("--params-file", lot_params_file, "JSON parameters; flags override")
        ->check(CLI::ExistingFile);

    // backtest
    auto* backtest = app.add_subcommand("backtest", "grid search on a cohort with outcomes");
    std::string mechanism = "det", bt_cohort;
    std::string alpha_grid, lambda_grid, gamma_grid, tau_grid, k_grid, seed_fraction_grid, gamma_cond_grid;
    std::size_t n_draws = kDefaultDraws;
    unsigned threads = 0;
    double bt_budget = 1.0;
    backtest->add_option("--mechanism", mechanism, "det or stoch")->check(CLI::IsMember({"det", "stoch"}));
    backtest->add_option("--cohort", bt_cohort, "cohort CSV or JSON")->required()->check(CLI::ExistingFile);
    backtest->add_option("--budget", bt_budget, "total budget B");
    backtest->add_option("--alpha-grid", alpha_grid, "comma-separated alpha values");
    backtest->add_option("--lambda-grid", lambda_grid, "comma-separated lambda values (det)");
    backtest->add_option("--gamma-grid", gamma_grid, "comma-separated gamma values (det)");
    backtest->add_option("--tau-grid", tau_grid, "comma-separated tau values (stoch)");
    backtest->add_option("--k-grid", k_grid, "comma-separated K values (stoch)");
    backtest->add_option("--seed-fraction-grid", seed_fraction_grid,
                         "comma-separated seed fractions f, seed grant f*B/K (stoch)");
    backtest->add_option("--gamma-cond-grid", gamma_cond_grid, "comma-separated gamma_cond values (stoch)");
    auto* o_draws = backtest->add_option("--n-draws", n_draws, "Monte-Carlo draws per grid point (stoch)");
    backtest->add_option("--threads", threads, "worker threads, 0 = all cores");

    // synth
    auto* synth = app.add_subcommand("synth", "synthetic cohort with a target rank correlation");
    SynthSpec spec;
    synth->add_option("--n", spec.n, "cohort size");
    synth->add_option("--rho", spec.rho, "Spearman correlation between s and o");
    synth->add_option("--tail", spec.tail_exponent, "Pareto tail exponent of raw values");

    // curve
    auto* curve = app.add_subcommand("curve", "allocation-curve data: share against score");
    DetParams curve_params;
    std::string curve_gammas = "0.5,1,2,4,8,16,32";
    std::size_t points = 101;
    curve->add_option("--alpha", curve_params.alpha, "exploration fraction");
    curve->add_option("--lambda", curve_params.lambda, "uniform part of exploration");
    curve->add_option("--gamma-grid", curve_gammas, "comma-separated gamma values, one curve each");
    curve->add_option("--points", points, "scores on an even grid over [0,1]");

    // hist2d
    auto* hist = app.add_subcommand("hist2d", "joint histogram of s against o");
    std::string hist_cohort;
    std::size_t bins = 10;
    bool smooth = false;
    hist->add_option("--cohort", hist_cohort, "cohort CSV or JSON")->required()->check(CLI::ExistingFile);
    hist->add_option("--bins", bins, "bins per axis");
    hist->add_flag("--smooth", smooth, "3x3 binomial smoothing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const Context ctx{g, out, err};
    try {
        if (*ingest) {
            std::vector<ResearcherRecord> records;
            if (!ingest_input.empty()) {
                records = load_dataset(ingest_input);
            } else if (!ingest_id.empty()) {
                FetchConfig config;
                config.base_url = base_url;
                config.cache_dir = cache_dir;
                config.institute_id = institute;
                config.mailto = mailto;
                config.allow_network = !network_disabled();
                config.log = [&](std::string_view line) { err << line << '\n'; };
                FetchStats stats;
                records = fetch_openalex(ingest_id, config, &stats);
                err << "requests: " << stats.requests << ", cache hits: " << stats.cache_hits
                    << ", retries: " << stats.retries << ", pages: " << stats.pages << '\n';
            } else {
                throw CLI::RequiredError("--openalex or --input");
            }
            ctx.emit("dataset.json", dataset_to_json(records).dump(2) + '\n');
        } else if (*cohort_cmd) {
            Window ref, fut;
            if (o_year->count()) {
                ref = Window::reference_for(year);
                fut = Window::future_for(year);
            } else {
                if (!(o_rs->count() && o_re->count() && o_fs->count() && o_fe->count()))
                    throw CLI::RequiredError("--year or all four window bounds");
                ref = {ref_start, ref_end};
                fut = {fut_start, fut_end};
            }
            const auto records = load_dataset(dataset_path);
            json meta;
            Cohort cohort;
            if (single) {
                auto build = build_cohort_detailed(records, ref, fut);
                meta = cohort_metadata(build);
                cohort = std::move(build.cohort);
            } else {
                auto build = build_pooled_cohort(records, ref, fut);
                meta = cohort_metadata(build);
                cohort = std::move(build.cohort);
            }
            emit_cohort(ctx, cohort);
            ctx.save("cohort.meta.json", meta.dump(2) + '\n');
        } else if (*allocate) {
            alloc_scores.load();
            DetParams params = det;
            if (!alloc_params_file.empty()) {
                params = det_params_from_json(read_json_file(alloc_params_file));
                if (o_alpha->count()) params.alpha = det.alpha;
                if (o_lambda->count()) params.lambda = det.lambda;
                if (o_gamma->count()) params.gamma = det.gamma;
            }
            if (o_lower->count()) params.bounds = ShareBounds{lower, upper};
            const auto alloc = allocate_det(alloc_scores.values, alloc_budget, params);
            if (ctx.json_format()) {
                json j = allocation_metadata(alloc);
                json shares = json::array();
                for (double v : alloc.shares) shares.push_back(format_decimal(v));
                j["researcher_ids"] = alloc_scores.ids;
                j["shares"] = shares;
                ctx.emit("allocation.json", j.dump(2) + '\n');
            } else {
                out << fixed6(alloc.shares);
                ctx.save("allocation.csv", allocation_to_csv(alloc, alloc_scores.ids));
                ctx.save("allocation.meta.json", allocation_metadata(alloc).dump(2) + '\n');
            }
        } else if (*lottery) {
            lot_scores.load();
            StochParams params = stoch;
            if (!lot_params_file.empty()) {
                params = stoch_params_from_json(read_json_file(lot_params_file));
                if (l_alpha->count()) params.alpha = stoch.alpha;
                if (l_tau->count()) params.tau = stoch.tau;
                if (l_k->count()) params.k = stoch.k;
                if (l_seed_grant->count()) params.seed_grant = stoch.seed_grant;
                if (l_gamma->count()) params.gamma_cond = stoch.gamma_cond;
            }
            if (draw) {
                const auto seed = ctx.effective_seed();
                const auto result = run_lottery(lot_scores.values, lot_budget, params, seed);
                if (ctx.json_format()) {
                    ctx.emit("draw.json", draw_to_json(result, lot_scores.ids).dump(2) + '\n');
                } else {
                    ctx.emit("draw.csv", allocation_to_csv(result.allocation, lot_scores.ids));
                    ctx.save("draw.json", draw_to_json(result, lot_scores.ids).dump(2) + '\n');
                }
            } else {
                const auto policy = gibbs_probabilities(lot_scores.values, params.alpha, params.tau);
                if (ctx.json_format()) {
                    json p = json::array();
                    for (double v : policy.probabilities) p.push_back(format_decimal(v));
                    ctx.emit("probabilities.json",
                             json{{"researcher_ids", lot_scores.ids}, {"p", p}}.dump(2) + '\n');
                } else {
                    out << fixed6(policy.probabilities);
                    ctx.save("probabilities.csv", probabilities_to_csv(policy, lot_scores.ids));
                }
            }
        } else if (*backtest) {
            const auto cohort = load_cohort(bt_cohort);
            auto axis = [](const std::string& text, const char* flag, std::vector<double>& target) {
                if (!text.empty()) target = parse_decimal_list(text, flag);
            };
            BacktestResult result;
            if (mechanism == "det") {
                if (o_draws->count()) err << "warning: --n-draws is ignored by the det mechanism\n";
                DetGrid grid = DetGrid::defaults();
                axis(alpha_grid, "--alpha-grid", grid.alpha);
                axis(lambda_grid, "--lambda-grid", grid.lambda);
                axis(gamma_grid, "--gamma-grid", grid.gamma);
                result = grid_search_det(cohort, bt_budget, grid);
            } else {
                StochGrid grid = StochGrid::defaults(cohort.size());
                axis(alpha_grid, "--alpha-grid", grid.alpha);
                axis(tau_grid, "--tau-grid", grid.tau);
                axis(seed_fraction_grid, "--seed-fraction-grid", grid.seed_fraction);
                axis(gamma_cond_grid, "--gamma-cond-grid", grid.gamma_cond);
                if (!k_grid.empty()) {
                    grid.k.clear();
                    for (double v : parse_decimal_list(k_grid, "--k-grid")) {
                        require(v >= 1.0 && v == std::floor(v), "K values must be positive integers", "--k-grid");
                        grid.k.push_back(static_cast<std::size_t>(v));
                    }
                }
                const auto seed = ctx.effective_seed();
                result = optimize_stoch(cohort, bt_budget, grid, n_draws, seed, threads);
            }
            if (ctx.json_format()) {
                ctx.emit("backtest.json", backtest_to_json(result).dump(2) + '\n');
            } else {
                ctx.emit("backtest.csv", backtest_to_csv(result));
                ctx.save("backtest.summary.json", backtest_summary(result).dump(2) + '\n');
            }
        } else if (*synth) {
            spec.seed = ctx.effective_seed();
            emit_cohort(ctx, synth_cohort(spec));
        } else if (*curve) {
            std::vector<std::pair<double, std::vector<CurvePoint>>> curves;
            for (double gamma : parse_decimal_list(curve_gammas, "--gamma-grid")) {
                DetParams p = curve_params;
                p.gamma = gamma;
                curves.emplace_back(gamma, allocation_curve(p, points));
            }
            ctx.emit("curve.csv", curve_to_csv(curves));
        } else if (*hist) {
            const auto cohort = load_cohort(hist_cohort);
            require(cohort.has_outcomes, "cohort has no outcome column", "--cohort");
            const auto h = joint_histogram(cohort, bins, smooth);
            if (ctx.json_format()) {
                json rows = json::array();
                for (std::size_t r = 0; r < h.bins; ++r) {
                    json row = json::array();
                    for (std::size_t c = 0; c < h.bins; ++c) row.push_back(format_decimal(h.at(r, c)));
                    rows.push_back(row);
                }
                ctx.emit("hist2d.json", json{{"bins", h.bins}, {"cells", rows}}.dump(2) + '\n');
            } else {
                ctx.emit("hist2d.csv", histogram_to_csv(h));
            }
        }
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n' << "Run with --help for more information.\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what();
        if (!e.field().empty()) err << " [" << e.field() << "]";
        err << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    return dispatch(argc, argv, out, err);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"scifund"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace scifund
