#include "scifund/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "scifund/error.hpp"

namespace scifund {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& message, const std::string& field) {
    throw Error(ErrorCode::malformed_payload, message, field);
}

const json& member(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) malformed("missing field '" + std::string(key) + "'", where + "." + key);
    return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = member(obj, key, where);
    if (!v.is_string()) malformed(std::string(key) + " must be a string", where + "." + key);
    return v.get<std::string>();
}

int parse_year_key(const std::string& key, const std::string& where) {
    int year = 0;
    const auto* end = key.data() + key.size();
    auto [ptr, ec] = std::from_chars(key.data(), end, year);
    if (ec != std::errc{} || ptr != end) malformed("year key '" + key + "' is not an integer", where);
    return year;
}

}  // namespace

std::vector<ResearcherRecord> parse_dataset(const json& doc) {
    if (!doc.is_array()) malformed("dataset must be a JSON array", "$");
    std::vector<ResearcherRecord> out;
    out.reserve(doc.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < doc.size(); ++r) {
        const std::string where = "[" + std::to_string(r) + "]";
        const auto& obj = doc[r];
        if (!obj.is_object()) malformed("researcher entry must be an object", where);
        ResearcherRecord rec;
        rec.researcher_id = string_field(obj, "researcher_id", where);
        rec.institute_id = string_field(obj, "institute_id", where);
        if (!seen.insert(rec.institute_id + '\n' + rec.researcher_id).second)
            malformed("duplicate researcher_id within institute", where + ".researcher_id");
        const auto& pubs = member(obj, "publications", where);
        if (!pubs.is_array()) malformed("publications must be an array", where + ".publications");
        for (std::size_t p = 0; p < pubs.size(); ++p) {
            const std::string pw = where + ".publications[" + std::to_string(p) + "]";
            const auto& pj = pubs[p];
            if (!pj.is_object()) malformed("publication must be an object", pw);
            Publication pub;
            pub.id = string_field(pj, "id", pw);
            const auto& year = member(pj, "year", pw);
            if (!year.is_number_integer()) malformed("year must be an integer", pw + ".year");
            pub.year = year.get<int>();
            if (pub.year < 1900 || pub.year > 2100) malformed("year outside [1900, 2100]", pw + ".year");
            const auto& cites = member(pj, "citations_by_year", pw);
            if (!cites.is_object())
                malformed("citations_by_year must be an object", pw + ".citations_by_year");
            for (const auto& [key, count] : cites.items()) {
                const std::string cw = pw + ".citations_by_year." + key;
                const int y = parse_year_key(key, cw);
                if (!count.is_number_integer() || count.get<std::int64_t>() < 0)
                    malformed("citation count must be a non-negative integer", cw);
                pub.citations_by_year[y] += count.get<std::int64_t>();
            }
            rec.publications.push_back(std::move(pub));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<ResearcherRecord> parse_dataset(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) malformed("dataset is not valid JSON", "$");
    return parse_dataset(doc);
}

std::vector<ResearcherRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open dataset " + path.string(), "dataset");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    return parse_dataset(std::string_view(text));
}

json dataset_to_json(const std::vector<ResearcherRecord>& records) {
    json out = json::array();
    for (const auto& r : records) {
        json pubs = json::array();
        for (const auto& p : r.publications) {
            json cites = json::object();
            for (const auto& [year, count] : p.citations_by_year) cites[std::to_string(year)] = count;
            pubs.push_back({{"id", p.id}, {"year", p.year}, {"citations_by_year", cites}});
        }
        out.push_back({{"researcher_id", r.researcher_id},
                       {"institute_id", r.institute_id},
                       {"publications", pubs}});
    }
    return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<ResearcherRecord>& records) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string(), "output");
    out << dataset_to_json(records).dump(1) << '\n';
}

}  // namespace scifund
