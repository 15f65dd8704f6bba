#pragma once
// Retrieval of works with per-year citation counts from an OpenAlex-style
// REST API, mapped into ResearcherRecords.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scifund/cohort.hpp"

namespace scifund {

struct FetchConfig {
    std::string base_url = "https://api.openalex.org";
    std::filesystem::path cache_dir;  // empty disables the response cache
    std::chrono::milliseconds min_interval{110};
    int max_retries = 3;
    std::chrono::milliseconds backoff{250};  // doubled after each retry
    int per_page = 200;
    std::string mailto;
    std::string institute_id;  // institute label for author fetches
    // When false only loopback hosts and cached responses are used.
    bool allow_network = true;
    std::function<void(std::string_view)> log;
};

struct FetchStats {
    std::size_t requests = 0;
    std::size_t retries = 0;
    std::size_t cache_hits = 0;
    std::size_t pages = 0;
};

struct Work {
    std::string id;
    int year = 0;
    std::map<int, std::int64_t> citations_by_year;
    // (author id, institution ids) per authorship
    std::vector<std::pair<std::string, std::vector<std::string>>> authorships;
};

struct WorksPage {
    std::vector<Work> works;
    std::string next_cursor;  // empty on the last page
};

// "https://openalex.org/A123" -> "A123"
std::string short_openalex_id(std::string_view id);

// Throws Error(malformed_payload) naming the offending field.
WorksPage parse_works_page(const nlohmann::json& page);

// Ids starting with 'A' are authors (one record), 'I' institutions (one
// record per affiliated author).
std::vector<ResearcherRecord> fetch_openalex(const std::string& author_or_institution_id,
                                             const FetchConfig& config, FetchStats* stats = nullptr);

}  // namespace scifund
