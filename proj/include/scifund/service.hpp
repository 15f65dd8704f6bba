#pragma once
// Stateless JSON-over-HTTP facade. Every endpoint is a pure function of the
// request body except the cohort upload store and the backtest job table.
//
// Environment:
//   SCIFUND_BIND          host:port            (default 127.0.0.1:8080)
//   SCIFUND_WORKERS       backtest worker threads (default 2)
//   SCIFUND_QUEUE         pending backtest jobs before 429 (default 16)
//   SCIFUND_COHORT_STORE  directory for uploaded cohorts (default: memory only)
//   SCIFUND_CORS_ORIGIN   Access-Control-Allow-Origin value (default *)

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scifund/cohort.hpp"

namespace httplib {
class Server;
}

namespace scifund {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    unsigned workers = 2;
    std::size_t queue_capacity = 16;
    std::filesystem::path cohort_store;
    std::string cors_origin = "*";
    // Grid-point draws above which /v1/backtest/grid answers 202.
    std::size_t sync_limit = 10000;

    static ServiceConfig from_env();
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

// Closed set of error codes carried in {"error": {code, message, field}}.
namespace api_error {
inline constexpr std::string_view invalid_json = "invalid_json";
inline constexpr std::string_view invalid_argument = "invalid_argument";
inline constexpr std::string_view infeasible_bounds = "infeasible_bounds";
inline constexpr std::string_view exploit_limit = "exploit_limit";
inline constexpr std::string_view not_found = "not_found";
inline constexpr std::string_view queue_full = "queue_full";
inline constexpr std::string_view internal = "internal";
}  // namespace api_error

class CohortStore {
public:
    explicit CohortStore(std::filesystem::path dir);

    // Returns the content-hash id; re-uploading the same cohort is a no-op.
    std::string put(const Cohort& cohort);
    std::optional<Cohort> get(const std::string& id) const;

private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::string, Cohort> cohorts_;
};

class WorkerPool {
public:
    WorkerPool(unsigned workers, std::size_t capacity);
    ~WorkerPool();

    // False when the queue is full.
    bool submit(std::function<void()> task);

private:
    void run(std::stop_token stop);

    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable_any ready_;
    std::deque<std::function<void()>> queue_;
    std::vector<std::jthread> threads_;
};

class Service {
public:
    explicit Service(ServiceConfig config);

    HttpResponse handle(std::string_view method, std::string_view path, std::string_view body);

    HttpResponse allocate_deterministic(std::string_view body);
    HttpResponse lottery_probabilities(std::string_view body);
    HttpResponse lottery_draw(std::string_view body);
    HttpResponse upload_cohort(std::string_view csv);
    HttpResponse get_cohort(const std::string& id);
    HttpResponse backtest_grid(std::string_view body);
    HttpResponse backtest_job(const std::string& token);

    // Registers every route plus CORS handling on an httplib server.
    void mount(httplib::Server& server);

    const ServiceConfig& config() const { return config_; }

private:
    struct Job {
        enum class State { queued, done, failed } state = State::queued;
        HttpResponse response;
    };

    Cohort resolve_cohort(const nlohmann::json& body, bool need_outcomes) const;

    ServiceConfig config_;
    CohortStore store_;
    std::mutex jobs_mutex_;
    std::map<std::string, Job> jobs_;
    WorkerPool pool_;  // last: joins before the job table goes away
};

std::string sha256_hex(std::string_view data);

}  // namespace scifund
