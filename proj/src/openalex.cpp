#include "scifund/openalex.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <map>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "scifund/error.hpp"

namespace scifund {

using nlohmann::json;

std::string short_openalex_id(std::string_view id) {
    const auto slash = id.rfind('/');
    return std::string(slash == std::string_view::npos ? id : id.substr(slash + 1));
}

namespace {

[[noreturn]] void malformed(const std::string& message, const std::string& field) {
    throw Error(ErrorCode::malformed_payload, message, field);
}

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) malformed("expected an object", where);
    auto it = obj.find(key);
    if (it == obj.end()) malformed("missing field '" + std::string(key) + "'", where + "." + key);
    return *it;
}

Work parse_work(const json& w, const std::string& where) {
    Work out;
    const auto& id = field(w, "id", where);
    if (!id.is_string()) malformed("id must be a string", where + ".id");
    out.id = short_openalex_id(id.get<std::string>());
    const auto& year = field(w, "publication_year", where);
    if (!year.is_number_integer()) malformed("publication_year must be an integer", where + ".publication_year");
    out.year = year.get<int>();
    const auto& counts = field(w, "counts_by_year", where);
    if (!counts.is_array()) malformed("counts_by_year must be an array", where + ".counts_by_year");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const std::string cw = where + ".counts_by_year[" + std::to_string(i) + "]";
        const auto& y = field(counts[i], "year", cw);
        const auto& c = field(counts[i], "cited_by_count", cw);
        if (!y.is_number_integer()) malformed("year must be an integer", cw + ".year");
        if (!c.is_number_integer() || c.get<std::int64_t>() < 0)
            malformed("cited_by_count must be a non-negative integer", cw + ".cited_by_count");
        out.citations_by_year[y.get<int>()] += c.get<std::int64_t>();
    }
    if (auto it = w.find("authorships"); it != w.end() && it->is_array()) {
        for (std::size_t a = 0; a < it->size(); ++a) {
            const auto& auth = (*it)[a];
            const std::string aw = where + ".authorships[" + std::to_string(a) + "]";
            const auto& author = field(auth, "author", aw);
            const auto& author_id = field(author, "id", aw + ".author");
            if (!author_id.is_string()) malformed("author id must be a string", aw + ".author.id");
            std::vector<std::string> institutions;
            if (auto inst = auth.find("institutions"); inst != auth.end() && inst->is_array())
                for (const auto& i : *inst)
                    if (i.is_object() && i.contains("id") && i["id"].is_string())
                        institutions.push_back(short_openalex_id(i["id"].get<std::string>()));
            out.authorships.emplace_back(short_openalex_id(author_id.get<std::string>()), std::move(institutions));
        }
    }
    return out;
}

bool is_loopback(const std::string& base_url) {
    auto rest = std::string_view(base_url);
    if (auto scheme = rest.find("://"); scheme != std::string_view::npos) rest.remove_prefix(scheme + 3);
    const auto host = rest.substr(0, rest.find_first_of(":/"));
    return host == "localhost" || host == "127.0.0.1" || host == "[::1]";
}

class ResponseCache {
public:
    explicit ResponseCache(const std::filesystem::path& dir) {
        if (dir.empty()) return;
        std::filesystem::create_directories(dir);
        path_ = dir / "openalex-cache.ndjson";
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            auto entry = json::parse(line, nullptr, false);
            // A torn last line from an interrupted run is skipped.
            if (entry.is_discarded() || !entry.contains("url") || !entry.contains("body")) continue;
            entries_[entry["url"].get<std::string>()] = entry["body"];
        }
    }

    const json* find(const std::string& url) const {
        auto it = entries_.find(url);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void store(const std::string& url, const json& body) {
        entries_[url] = body;
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        out << json{{"url", url}, {"body", body}}.dump() << '\n';
    }

private:
    std::filesystem::path path_;
    std::unordered_map<std::string, json> entries_;
};

class Fetcher {
public:
    Fetcher(const FetchConfig& config, FetchStats& stats)
        : config_(config), stats_(stats), cache_(config.cache_dir), client_(config.base_url) {
        client_.set_connection_timeout(10);
        client_.set_read_timeout(60);
    }

    json get(const std::string& path) {
        const std::string url = config_.base_url + path;
        if (const auto* hit = cache_.find(url)) {
            ++stats_.cache_hits;
            return *hit;
        }
        if (!config_.allow_network && !is_loopback(config_.base_url))
            throw Error(ErrorCode::network_forbidden, "network access disabled (NO_NETWORK); " + url + " not cached",
                        "base_url");

        auto delay = config_.backoff;
        int last_status = 0;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                ++stats_.retries;
                log("retry " + std::to_string(attempt) + " after HTTP " + std::to_string(last_status) + " for " + url);
                std::this_thread::sleep_for(delay);
                delay *= 2;
            }
            throttle();
            ++stats_.requests;
            auto res = client_.Get(path);
            last_status = res ? res->status : 0;
            if (res && res->status == 200) {
                auto body = json::parse(res->body, nullptr, false);
                if (body.is_discarded()) malformed("response is not valid JSON", url);
                cache_.store(url, body);
                return body;
            }
            const bool transient = !res || res->status == 429 || res->status >= 500;
            if (!transient) break;
        }
        throw Error(ErrorCode::http_failure,
                    "request failed with HTTP " + std::to_string(last_status) + ": " + url, "status");
    }

private:
    void throttle() {
        const auto now = std::chrono::steady_clock::now();
        if (last_request_ && now - *last_request_ < config_.min_interval)
            std::this_thread::sleep_for(config_.min_interval - (now - *last_request_));
        last_request_ = std::chrono::steady_clock::now();
    }

    void log(const std::string& message) {
        if (config_.log) config_.log(message);
    }

    const FetchConfig& config_;
    FetchStats& stats_;
    ResponseCache cache_;
    httplib::Client client_;
    std::optional<std::chrono::steady_clock::time_point> last_request_;
};

Publication to_publication(const Work& w) { return {w.id, w.year, w.citations_by_year}; }

}  // namespace

WorksPage parse_works_page(const json& page) {
    WorksPage out;
    const auto& results = field(page, "results", "$");
    if (!results.is_array()) malformed("results must be an array", "$.results");
    for (std::size_t i = 0; i < results.size(); ++i)
        out.works.push_back(parse_work(results[i], "results[" + std::to_string(i) + "]"));
    if (auto meta = page.find("meta"); meta != page.end() && meta->is_object())
        if (auto cur = meta->find("next_cursor"); cur != meta->end() && cur->is_string())
            out.next_cursor = cur->get<std::string>();
    return out;
}

std::vector<ResearcherRecord> fetch_openalex(const std::string& author_or_institution_id,
                                             const FetchConfig& config, FetchStats* stats) {
    const std::string id = short_openalex_id(author_or_institution_id);
    require(!id.empty() && (id[0] == 'A' || id[0] == 'I'),
            "expected an OpenAlex author (A...) or institution (I...) id", "id");
    require(config.per_page >= 1 && config.per_page <= 200, "per_page must lie in [1, 200]", "per_page");
    const bool author = id[0] == 'A';

    FetchStats local;
    FetchStats& st = stats ? *stats : local;
    Fetcher fetcher(config, st);

    std::vector<Work> works;
    std::string cursor = "*";
    while (!cursor.empty()) {
        std::string path = "/works?filter=" + std::string(author ? "author.id:" : "institutions.id:") + id +
                           "&per-page=" + std::to_string(config.per_page) +
                           "&cursor=" + httplib::detail::encode_query_param(cursor);
        if (!config.mailto.empty()) path += "&mailto=" + httplib::detail::encode_query_param(config.mailto);
        auto page = parse_works_page(fetcher.get(path));
        ++st.pages;
        if (page.works.empty()) break;
        for (auto& w : page.works) works.push_back(std::move(w));
        cursor = page.next_cursor;
    }

    if (author) {
        ResearcherRecord rec{id, config.institute_id, {}};
        std::map<std::string, int> affiliation_counts;
        for (const auto& w : works) {
            rec.publications.push_back(to_publication(w));
            for (const auto& [author_id, institutions] : w.authorships)
                if (author_id == id)
                    for (const auto& inst : institutions) ++affiliation_counts[inst];
        }
        if (rec.institute_id.empty()) {
            rec.institute_id = "unknown";
            int best = 0;
            for (const auto& [inst, count] : affiliation_counts)
                if (count > best) {
                    best = count;
                    rec.institute_id = inst;
                }
        }
        return {rec};
    }

    std::map<std::string, ResearcherRecord> by_author;
    for (const auto& w : works)
        for (const auto& [author_id, institutions] : w.authorships) {
            if (std::find(institutions.begin(), institutions.end(), id) == institutions.end()) continue;
            auto& rec = by_author[author_id];
            rec.researcher_id = author_id;
            rec.institute_id = id;
            if (rec.publications.empty() || rec.publications.back().id != w.id)
                rec.publications.push_back(to_publication(w));
        }
    std::vector<ResearcherRecord> out;
    for (auto& [_, rec] : by_author) out.push_back(std::move(rec));
    return out;
}

}  // namespace scifund
