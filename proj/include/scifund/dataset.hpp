#pragma once
// Input dataset file: a JSON array of researcher objects
//   {researcher_id, institute_id, publications: [{id, year, citations_by_year: {"2019": 4, ...}}]}

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scifund/cohort.hpp"

namespace scifund {

// Throws Error(malformed_payload) naming the offending field. Publications
// without per-year citation counts are rejected.
std::vector<ResearcherRecord> parse_dataset(const nlohmann::json& doc);
std::vector<ResearcherRecord> parse_dataset(std::string_view text);
std::vector<ResearcherRecord> load_dataset(const std::filesystem::path& path);

nlohmann::json dataset_to_json(const std::vector<ResearcherRecord>& records);
void save_dataset(const std::filesystem::path& path, const std::vector<ResearcherRecord>& records);

}  // namespace scifund
