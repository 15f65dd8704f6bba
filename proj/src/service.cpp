#include "scifund/service.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <random>

#include <httplib.h>
#include <openssl/evp.h>

#include "scifund/alloc_det.hpp"
#include "scifund/alloc_stoch.hpp"
#include "scifund/backtest.hpp"
#include "scifund/error.hpp"
#include "scifund/formats.hpp"

namespace scifund {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

ServiceConfig ServiceConfig::from_env() {
    ServiceConfig c;
    if (const char* bind = std::getenv("SCIFUND_BIND")) {
        std::string_view b(bind);
        const auto colon = b.rfind(':');
        if (colon == std::string_view::npos) {
            c.host = std::string(b);
        } else {
            c.host = std::string(b.substr(0, colon));
            c.port = std::atoi(std::string(b.substr(colon + 1)).c_str());
        }
    }
    if (const char* w = std::getenv("SCIFUND_WORKERS")) c.workers = std::max(1, std::atoi(w));
    if (const char* q = std::getenv("SCIFUND_QUEUE")) c.queue_capacity = std::max(1, std::atoi(q));
    if (const char* dir = std::getenv("SCIFUND_COHORT_STORE")) c.cohort_store = dir;
    if (const char* origin = std::getenv("SCIFUND_CORS_ORIGIN")) c.cors_origin = origin;
    return c;
}

// ---------------------------------------------------------------------------
// CohortStore

CohortStore::CohortStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::string CohortStore::put(const Cohort& cohort) {
    const std::string csv = cohort_to_csv(cohort);
    const std::string id = sha256_hex(csv);
    std::unique_lock lock(mutex_);
    if (cohorts_.contains(id)) return id;
    if (!dir_.empty()) write_text(dir_ / (id + ".csv"), csv);
    cohorts_.emplace(id, cohort);
    return id;
}

std::optional<Cohort> CohortStore::get(const std::string& id) const {
    {
        std::shared_lock lock(mutex_);
        if (auto it = cohorts_.find(id); it != cohorts_.end()) return it->second;
    }
    if (dir_.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos) return std::nullopt;
    const auto path = dir_ / (id + ".csv");
    if (!std::filesystem::exists(path)) return std::nullopt;
    auto cohort = cohort_from_csv(read_text(path), id);
    std::unique_lock lock(mutex_);
    return cohorts_.emplace(id, std::move(cohort)).first->second;
}

// ---------------------------------------------------------------------------
// WorkerPool

WorkerPool::WorkerPool(unsigned workers, std::size_t capacity) : capacity_(capacity) {
    for (unsigned i = 0; i < std::max(1u, workers); ++i)
        threads_.emplace_back([this](std::stop_token stop) { run(stop); });
}

WorkerPool::~WorkerPool() {
    for (auto& t : threads_) t.request_stop();
    ready_.notify_all();
}

bool WorkerPool::submit(std::function<void()> task) {
    {
        std::lock_guard lock(mutex_);
        if (queue_.size() >= capacity_) return false;
        queue_.push_back(std::move(task));
    }
    ready_.notify_one();
    return true;
}

void WorkerPool::run(std::stop_token stop) {
    while (true) {
        std::function<void()> task;
        {
            std::unique_lock lock(mutex_);
            if (!ready_.wait(lock, stop, [this] { return !queue_.empty(); })) return;
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

// ---------------------------------------------------------------------------
// Endpoints

namespace {

HttpResponse json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

HttpResponse error_response(int status, std::string_view code, const std::string& message,
                            const std::string& field = {}) {
    json err = {{"code", code}, {"message", message}};
    if (!field.empty()) err["field"] = field;
    return json_response(status, {{"error", err}});
}

HttpResponse from_error(const Error& e) {
    switch (e.code()) {
        case ErrorCode::infeasible_bounds:
            return error_response(422, api_error::infeasible_bounds, e.what(), e.field());
        case ErrorCode::exploit_limit:
            return error_response(409, api_error::exploit_limit, e.what(), e.field());
        case ErrorCode::not_found:
            return error_response(404, api_error::not_found, e.what(), e.field());
        case ErrorCode::malformed_payload:
            if (e.field() == "$") return error_response(400, api_error::invalid_json, e.what());
            return error_response(400, api_error::invalid_argument, e.what(), e.field());
        default:
            return error_response(400, api_error::invalid_argument, e.what(), e.field());
    }
}

template <typename F>
HttpResponse guarded(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return from_error(e);
    } catch (const json::exception&) {
        return error_response(400, api_error::invalid_argument, "request does not match the schema");
    } catch (const std::exception&) {
        return error_response(500, api_error::internal, "internal error");
    }
}

json parse_body(std::string_view body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorCode::malformed_payload, "request body must be a JSON object", "$");
    return doc;
}

std::vector<double> number_array(const json& j, const std::string& field) {
    require(j.is_array(), field + " must be an array", field);
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(json_decimal(j[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

double number_field(const json& body, const char* key, double fallback) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return fallback;
    return json_decimal(*it, key);
}

std::optional<std::uint64_t> seed_field(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (it->is_number_unsigned()) return it->get<std::uint64_t>();
    if (it->is_number_integer() && it->get<long long>() >= 0) return static_cast<std::uint64_t>(it->get<long long>());
    if (it->is_string()) {
        const auto& s = it->get_ref<const std::string&>();
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && ptr == s.data() + s.size() && !s.empty()) return v;
    }
    fail(std::string(key) + " must be a non-negative integer", key);
}

// Seeds handed out by the server stay below 2^53 so JSON clients keep them exact.
std::uint64_t fresh_seed() {
    std::random_device rd;
    return ((static_cast<std::uint64_t>(rd()) << 32) ^ rd()) & ((1ULL << 53) - 1);
}

json decimal_array(std::span<const double> values) {
    json out = json::array();
    for (double v : values) out.push_back(format_decimal(v));
    return out;
}

struct ScoreTable {
    std::vector<std::string> ids;
    std::vector<double> scores;
};

std::vector<std::string> index_ids(std::size_t n) {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    return ids;
}

std::vector<std::string> ids_field(const json& body, std::size_t n) {
    auto it = body.find("researcher_ids");
    if (it == body.end() || it->is_null()) return index_ids(n);
    require(it->is_array() && it->size() == n, "researcher_ids must be an array matching scores",
            "researcher_ids");
    std::vector<std::string> ids;
    for (const auto& v : *it) {
        require(v.is_string(), "researcher_ids must be strings", "researcher_ids");
        ids.push_back(v.get<std::string>());
    }
    return ids;
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)), store_(config_.cohort_store), pool_(config_.workers, config_.queue_capacity) {}

Cohort Service::resolve_cohort(const json& body, bool need_outcomes) const {
    Cohort cohort;
    if (auto it = body.find("cohort_id"); it != body.end()) {
        require(it->is_string(), "cohort_id must be a string", "cohort_id");
        auto found = store_.get(it->get<std::string>());
        if (!found) throw Error(ErrorCode::not_found, "unknown cohort '" + it->get<std::string>() + "'", "cohort_id");
        cohort = std::move(*found);
    } else if (auto csv = body.find("cohort_csv"); csv != body.end()) {
        require(csv->is_string(), "cohort_csv must be a string", "cohort_csv");
        cohort = cohort_from_csv(csv->get<std::string>(), "inline");
    } else if (auto inl = body.find("cohort"); inl != body.end()) {
        require(inl->is_object(), "cohort must be an object {researcher_ids?, s, o}", "cohort");
        const auto s = number_array(inl->value("s", json()), "cohort.s");
        const bool with_o = inl->contains("o");
        const auto o = with_o ? number_array((*inl)["o"], "cohort.o") : std::vector<double>{};
        require(!with_o || o.size() == s.size(), "cohort.s and cohort.o differ in length", "cohort.o");
        const auto ids = ids_field(*inl, s.size());
        cohort.label = "inline";
        cohort.has_outcomes = with_o;
        for (std::size_t i = 0; i < s.size(); ++i) cohort.members.push_back({ids[i], s[i], with_o ? o[i] : 0.0});
        cohort.validate();
    } else {
        fail("request needs one of cohort_id, cohort_csv or cohort", "cohort");
    }
    if (need_outcomes) require(cohort.has_outcomes, "cohort has no outcome column", "cohort");
    return cohort;
}

namespace {

ScoreTable score_table(const json& body, const std::function<Cohort()>& from_cohort) {
    if (auto it = body.find("scores"); it != body.end()) {
        ScoreTable t;
        t.scores = number_array(*it, "scores");
        t.ids = ids_field(body, t.scores.size());
        return t;
    }
    const auto cohort = from_cohort();
    return {cohort.ids(), cohort.scores()};
}

}  // namespace

HttpResponse Service::allocate_deterministic(std::string_view body) {
    return guarded([&] {
        const auto req = parse_body(body);
        const auto table = score_table(req, [&] { return resolve_cohort(req, false); });
        const double budget = number_field(req, "B", number_field(req, "budget", 1.0));
        const auto params = det_params_from_json(req);
        const auto alloc = allocate_det(table.scores, budget, params);
        json diagnostics = {{"gini", format_decimal(gini(alloc.shares))},
                            {"top_decile_share", format_decimal(top_decile_share(alloc.shares))},
                            {"sum", format_decimal(alloc.total())}};
        return json_response(200, {{"researcher_ids", table.ids},
                                   {"shares", decimal_array(alloc.shares)},
                                   {"B", format_decimal(budget)},
                                   {"params", params_to_json(params)},
                                   {"diagnostics", diagnostics}});
    });
}

HttpResponse Service::lottery_probabilities(std::string_view body) {
    return guarded([&] {
        const auto req = parse_body(body);
        const auto table = score_table(req, [&] { return resolve_cohort(req, false); });
        const double alpha = number_field(req, "alpha", 0.0);
        const double tau = number_field(req, "tau", 1.0);
        try {
            const auto policy = gibbs_probabilities(table.scores, alpha, tau);
            return json_response(200, {{"researcher_ids", table.ids},
                                       {"p", decimal_array(policy.probabilities)},
                                       {"beta", format_decimal(inverse_temperature(alpha, tau))},
                                       {"alpha", alpha},
                                       {"tau", tau}});
        } catch (const Error& e) {
            if (e.code() != ErrorCode::exploit_limit) throw;
            return error_response(409, api_error::exploit_limit, "use /lottery/draw with exploit limit", "alpha");
        }
    });
}

HttpResponse Service::lottery_draw(std::string_view body) {
    return guarded([&] {
        const auto req = parse_body(body);
        const auto table = score_table(req, [&] { return resolve_cohort(req, false); });
        const double budget = number_field(req, "B", number_field(req, "budget", 1.0));
        const auto params = stoch_params_from_json(req.contains("params") ? req["params"] : req);
        const std::uint64_t seed = seed_field(req, "rng_seed").value_or(fresh_seed());
        const auto draw = run_lottery(table.scores, budget, params, seed);
        return json_response(200, draw_to_json(draw, table.ids));
    });
}

HttpResponse Service::upload_cohort(std::string_view csv) {
    return guarded([&] {
        const auto cohort = cohort_from_csv(csv);
        const auto id = store_.put(cohort);
        return json_response(200, {{"cohort_id", id}, {"n", cohort.size()}, {"has_outcomes", cohort.has_outcomes}});
    });
}

HttpResponse Service::get_cohort(const std::string& id) {
    return guarded([&] {
        const auto cohort = store_.get(id);
        if (!cohort) throw Error(ErrorCode::not_found, "unknown cohort '" + id + "'", "cohort_id");
        return HttpResponse{200, cohort_to_csv(*cohort), "text/csv"};
    });
}

HttpResponse Service::backtest_grid(std::string_view body) {
    return guarded([&]() -> HttpResponse {
        const auto req = parse_body(body);
        const std::string mechanism = req.value("mechanism", std::string("det"));
        const bool det = mechanism == "det" || mechanism == "deterministic";
        require(det || mechanism == "stoch" || mechanism == "stochastic",
                "mechanism must be 'det' or 'stoch'", "mechanism");
        const auto cohort = resolve_cohort(req, true);
        const double budget = number_field(req, "B", 1.0);
        const json grid = req.value("grid", json::object());
        require(grid.is_object(), "grid must be an object", "grid");

        auto axis = [&](const char* key, std::vector<double>& target) {
            if (auto it = grid.find(key); it != grid.end()) target = number_array(*it, std::string("grid.") + key);
        };
        json warnings = json::array();
        std::size_t work = 0;
        std::function<BacktestResult(unsigned)> compute;
        std::uint64_t root_seed = 0;
        std::size_t n_draws = 0;

        if (det) {
            DetGrid g = DetGrid::defaults();
            axis("alpha", g.alpha);
            axis("lambda", g.lambda);
            axis("gamma", g.gamma);
            g.normalize();
            if (req.contains("n_draws")) warnings.push_back("n_draws is ignored by the deterministic mechanism");
            if (req.contains("root_seed")) warnings.push_back("root_seed is ignored by the deterministic mechanism");
            work = g.size();
            compute = [cohort, budget, g](unsigned) { return grid_search_det(cohort, budget, g); };
        } else {
            StochGrid g = StochGrid::defaults(cohort.size());
            axis("alpha", g.alpha);
            axis("tau", g.tau);
            axis("seed_fraction", g.seed_fraction);
            axis("gamma_cond", g.gamma_cond);
            if (auto it = grid.find("K"); it != grid.end()) {
                require(it->is_array(), "grid.K must be an array", "grid.K");
                g.k.clear();
                for (const auto& v : *it) {
                    require(v.is_number_integer() && v.get<long long>() >= 1, "grid.K entries must be positive integers",
                            "grid.K");
                    g.k.push_back(v.get<std::size_t>());
                }
            }
            g.normalize(cohort.size());
            if (auto it = req.find("n_draws"); it != req.end()) {
                require(it->is_number_integer() && it->get<long long>() >= 1, "n_draws must be a positive integer",
                        "n_draws");
                n_draws = it->get<std::size_t>();
            } else {
                n_draws = kDefaultDraws;
            }
            root_seed = seed_field(req, "root_seed").value_or(fresh_seed());
            work = g.size() * n_draws;
            compute = [cohort, budget, g, n_draws, root_seed](unsigned threads) {
                return optimize_stoch(cohort, budget, g, n_draws, root_seed, threads);
            };
        }

        auto finish = [warnings](const BacktestResult& result) {
            json out = backtest_to_json(result);
            out["warnings"] = warnings;
            return out;
        };

        if (work <= config_.sync_limit) return json_response(200, finish(compute(0)));

        json canonical = req;
        canonical["root_seed"] = root_seed;
        const std::string token = sha256_hex(canonical.dump());
        const json accepted = {{"status", "queued"}, {"token", token}, {"poll", "/v1/backtest/jobs/" + token}};
        {
            std::lock_guard lock(jobs_mutex_);
            if (jobs_.contains(token)) return json_response(202, accepted);
            jobs_[token] = Job{};
        }
        const bool queued = pool_.submit([this, token, compute, finish] {
            HttpResponse response = guarded([&] { return json_response(200, finish(compute(1))); });
            std::lock_guard lock(jobs_mutex_);
            auto& job = jobs_[token];
            job.state = response.status == 200 ? Job::State::done : Job::State::failed;
            job.response = std::move(response);
        });
        if (!queued) {
            std::lock_guard lock(jobs_mutex_);
            jobs_.erase(token);
            return error_response(429, api_error::queue_full, "backtest queue is full; retry later");
        }
        return json_response(202, accepted);
    });
}

HttpResponse Service::backtest_job(const std::string& token) {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(token);
    if (it == jobs_.end()) return error_response(404, api_error::not_found, "unknown job token", "token");
    if (it->second.state == Job::State::queued)
        return json_response(202, {{"status", "queued"}, {"token", token}});
    return it->second.response;
}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) {
    static constexpr std::string_view cohorts_prefix = "/v1/cohorts/";
    static constexpr std::string_view jobs_prefix = "/v1/backtest/jobs/";
    HttpResponse r;
    if (method == "GET" && path == "/v1/health") {
        r = json_response(200, {{"status", "ok"}});
    } else if (method == "POST" && path == "/v1/allocate/deterministic") {
        r = allocate_deterministic(body);
    } else if (method == "POST" && path == "/v1/lottery/probabilities") {
        r = lottery_probabilities(body);
    } else if (method == "POST" && path == "/v1/lottery/draw") {
        r = lottery_draw(body);
    } else if (method == "POST" && path == "/v1/cohorts") {
        r = upload_cohort(body);
    } else if (method == "GET" && path.starts_with(cohorts_prefix)) {
        r = get_cohort(std::string(path.substr(cohorts_prefix.size())));
    } else if (method == "POST" && path == "/v1/backtest/grid") {
        r = backtest_grid(body);
    } else if (method == "GET" && path.starts_with(jobs_prefix)) {
        r = backtest_job(std::string(path.substr(jobs_prefix.size())));
    } else {
        r = error_response(404, api_error::not_found, "no route for " + std::string(method) + " " + std::string(path));
    }
    return r;
}

void Service::mount(httplib::Server& server) {
    const std::string origin = config_.cors_origin;
    server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    auto reply = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Post("/v1/cohorts", [this, reply](const httplib::Request& req, httplib::Response& res) {
        std::string csv = req.body;
        if (req.is_multipart_form_data()) csv = req.has_file("file") ? req.get_file_value("file").content : "";
        reply(res, upload_cohort(csv));
    });
    server.Post(R"(/v1/.*)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle("POST", req.path, req.body));
    });
    server.Get(R"(/v1/.*)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle("GET", req.path, req.body));
    });
}

}  // namespace scifund
