#include "scifund/formats.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scifund/error.hpp"

namespace scifund {

using nlohmann::json;

std::string format_decimal(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

double parse_decimal(std::string_view text, const std::string& field) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v))
        fail("'" + std::string(text) + "' is not a finite decimal number", field);
    return v;
}

double json_decimal(const json& v, const std::string& field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_decimal(std::string_view(v.get_ref<const std::string&>()), field);
    fail(field + " must be a number or a decimal string", field);
}

std::vector<double> parse_decimal_list(std::string_view text, const std::string& field) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
        out.push_back(parse_decimal(piece, field));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (comma == std::string_view::npos) return out;
        start = comma + 1;
    }
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) out.push_back(line);
        start = nl + 1;
    }
    return out;
}

void check_id(const std::string& id) {
    require(!id.empty() && id.find_first_of(",\"\n\r") == std::string::npos,
            "researcher_id '" + id + "' cannot be written to CSV", "researcher_id");
}

std::string window_label(const Window& w) {
    return std::to_string(w.start_year) + "-" + std::to_string(w.end_year);
}

}  // namespace

std::string cohort_to_csv(const Cohort& cohort) {
    std::string out = cohort.has_outcomes ? "researcher_id,s,o\n" : "researcher_id,s\n";
    for (const auto& m : cohort.members) {
        check_id(m.researcher_id);
        out += m.researcher_id + ',' + format_decimal(m.s);
        if (cohort.has_outcomes) out += ',' + format_decimal(m.o);
        out += '\n';
    }
    return out;
}

Cohort cohort_from_csv(std::string_view text, std::string label) {
    const auto lines = split_lines(text);
    require(!lines.empty(), "cohort CSV is empty", "csv");
    const auto header = split_fields(lines[0]);
    const bool with_o = header.size() == 3 && header[2] == "o";
    require(header.size() >= 2 && header[0] == "researcher_id" && header[1] == "s" &&
                (header.size() == 2 || with_o),
            "cohort CSV header must be 'researcher_id,s,o' or 'researcher_id,s'", "csv.header");
    Cohort c;
    c.label = std::move(label);
    c.has_outcomes = with_o;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_fields(lines[i]);
        const std::string where = "csv.line" + std::to_string(i + 1);
        require(f.size() == header.size(), "wrong number of columns", where);
        CohortMember m{std::string(f[0]), parse_decimal(f[1], where + ".s"), 0.0};
        if (with_o) m.o = parse_decimal(f[2], where + ".o");
        c.members.push_back(std::move(m));
    }
    c.validate();
    return c;
}

json cohort_metadata(const CohortBuild& build) {
    return {{"label", build.cohort.label},
            {"reference_window", window_label(build.reference)},
            {"future_window", window_label(build.future)},
            {"n", build.cohort.size()},
            {"excluded", build.excluded},
            {"eligibility", "at least 2 publications in the reference window"},
            {"percentile", "average rank, (rank - 1) / (n - 1), within institute and window"},
            {"s", "mean of productivity, avg-citation and max-citation percentiles, reference window"},
            {"o", "same aggregate over the future window"}};
}

json cohort_metadata(const PooledBuild& build) {
    json institutes = json::array();
    for (const auto& b : build.institutes) institutes.push_back(cohort_metadata(b));
    json out = {{"label", build.cohort.label},
                {"n", build.cohort.size()},
                {"institutes", institutes},
                {"skipped_institutes", build.skipped}};
    if (!build.institutes.empty()) {
        out["reference_window"] = window_label(build.institutes.front().reference);
        out["future_window"] = window_label(build.institutes.front().future);
    }
    return out;
}

std::string allocation_to_csv(const Allocation& alloc, const std::vector<std::string>& ids) {
    require(ids.size() == alloc.shares.size(), "ids and shares differ in length", "ids");
    std::string out = "researcher_id,share\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        check_id(ids[i]);
        out += ids[i] + ',' + format_decimal(alloc.shares[i]) + '\n';
    }
    return out;
}

std::string probabilities_to_csv(const LotteryPolicy& policy, const std::vector<std::string>& ids) {
    require(ids.size() == policy.probabilities.size(), "ids and probabilities differ in length", "ids");
    std::string out = "researcher_id,p\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        check_id(ids[i]);
        out += ids[i] + ',' + format_decimal(policy.probabilities[i]) + '\n';
    }
    return out;
}

std::string histogram_to_csv(const Histogram2D& h) {
    std::string out = "bins=" + std::to_string(h.bins) + '\n';
    for (std::size_t r = 0; r < h.bins; ++r) {
        for (std::size_t c = 0; c < h.bins; ++c) {
            if (c) out += ',';
            out += format_decimal(h.at(r, c));
        }
        out += '\n';
    }
    return out;
}

std::string curve_to_csv(const std::vector<std::pair<double, std::vector<CurvePoint>>>& curves) {
    std::string out = "gamma,s,share\n";
    for (const auto& [gamma, points] : curves)
        for (const auto& p : points)
            out += format_decimal(gamma) + ',' + format_decimal(p.score) + ',' + format_decimal(p.share) + '\n';
    return out;
}

std::string backtest_to_csv(const BacktestResult& result) {
    std::string out = result.mechanism == Mechanism::deterministic
                          ? "alpha,lambda,gamma,utility\n"
                          : "alpha,tau,K,seed_grant,gamma_cond,utility,std_error\n";
    for (const auto& row : result.rows) {
        if (const auto* d = std::get_if<DetParams>(&row.params)) {
            out += format_decimal(d->alpha) + ',' + format_decimal(d->lambda) + ',' +
                   format_decimal(d->gamma) + ',' + format_decimal(row.utility) + '\n';
        } else {
            const auto& s = std::get<StochParams>(row.params);
            out += format_decimal(s.alpha) + ',' + format_decimal(s.tau) + ',' + std::to_string(s.k) + ',' +
                   format_decimal(s.seed_grant) + ',' + format_decimal(s.gamma_cond) + ',' +
                   format_decimal(row.utility) + ',' + format_decimal(row.std_error) + '\n';
        }
    }
    return out;
}

json params_to_json(const DetParams& p) {
    json j = {{"alpha", p.alpha}, {"lambda", p.lambda}, {"gamma", p.gamma}};
    if (p.bounds) j["bounds"] = {{"lower", p.bounds->lower}, {"upper", p.bounds->upper}};
    return j;
}

json params_to_json(const StochParams& p) {
    return {{"alpha", p.alpha}, {"tau", p.tau}, {"K", p.k}, {"seed_grant", p.seed_grant},
            {"gamma_cond", p.gamma_cond}};
}

namespace {

double number_or(const json& j, const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return json_decimal(*it, key);
}

}  // namespace

DetParams det_params_from_json(const json& j) {
    require(j.is_object(), "parameters must be a JSON object", "params");
    DetParams p;
    p.alpha = number_or(j, "alpha", 0.0);
    p.lambda = number_or(j, "lambda", 0.0);
    p.gamma = number_or(j, "gamma", 1.0);
    if (auto it = j.find("bounds"); it != j.end() && !it->is_null()) {
        require(it->is_object(), "bounds must be an object {lower, upper}", "bounds");
        p.bounds = ShareBounds{number_or(*it, "lower", 0.0), number_or(*it, "upper", 0.0)};
    }
    return p;
}

StochParams stoch_params_from_json(const json& j) {
    require(j.is_object(), "parameters must be a JSON object", "params");
    StochParams p;
    p.alpha = number_or(j, "alpha", 0.0);
    p.tau = number_or(j, "tau", 1.0);
    const char* k_key = j.contains("K") ? "K" : "k";
    if (auto it = j.find(k_key); it != j.end()) {
        require(it->is_number_integer() && it->get<long long>() >= 1, "K must be a positive integer", "K");
        p.k = it->get<std::size_t>();
    }
    p.seed_grant = number_or(j, "seed_grant", 0.0);
    p.gamma_cond = number_or(j, "gamma_cond", 1.0);
    return p;
}

json allocation_metadata(const Allocation& alloc) {
    json j = {{"B", alloc.budget}, {"n", alloc.shares.size()}};
    if (const auto* d = std::get_if<DetParams>(&alloc.params)) {
        j["mechanism"] = "det";
        j["params"] = params_to_json(*d);
    } else if (const auto* s = std::get_if<StochParams>(&alloc.params)) {
        j["mechanism"] = "stoch";
        j["params"] = params_to_json(*s);
    }
    return j;
}

json draw_to_json(const DrawResult& draw, const std::vector<std::string>& ids) {
    require(ids.size() == draw.allocation.shares.size(), "ids and allocation differ in length", "ids");
    json selected = json::array();
    json selected_index = json::array();
    json allocation = json::array();
    for (std::size_t i : draw.selected) {
        selected.push_back(ids[i]);
        selected_index.push_back(i);
        allocation.push_back({{"researcher_id", ids[i]}, {"amount", format_decimal(draw.allocation.shares[i])}});
    }
    return {{"rng_seed", draw.rng_seed},
            {"params", params_to_json(draw.params)},
            {"B", draw.allocation.budget},
            {"mode", draw.params.alpha == 0.0 ? "exploit_limit" : "lottery"},
            {"selected", selected},
            {"selected_index", selected_index},
            {"allocation", allocation}};
}

namespace {

json row_params(const BacktestRow& row) {
    return std::visit([](const auto& p) { return params_to_json(p); }, row.params);
}

}  // namespace

json backtest_summary(const BacktestResult& result) {
    const auto& best = result.best_row();
    return {{"mechanism", to_string(result.mechanism)},
            {"best_params", row_params(best)},
            {"best_utility", format_decimal(best.utility)},
            {"best_std_error", format_decimal(best.std_error)},
            {"grid_points", result.rows.size()},
            {"n_draws", result.n_draws},
            {"root_seed", result.root_seed}};
}

json backtest_to_json(const BacktestResult& result) {
    json rows = json::array();
    for (const auto& row : result.rows)
        rows.push_back({{"params", row_params(row)},
                        {"utility", format_decimal(row.utility)},
                        {"std_error", format_decimal(row.std_error)}});
    json out = backtest_summary(result);
    out["rows"] = rows;
    return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string(), "output");
    out << text;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string(), "input");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace scifund
