#include <catch_amalgamated.hpp>

#include <filesystem>

#include "scifund/dataset.hpp"
#include "scifund/error.hpp"

using namespace scifund;

namespace {

const char* kDataset = R"([
  {"researcher_id": "A1", "institute_id": "I1",
   "publications": [{"id": "W1", "year": 2016, "citations_by_year": {"2017": 3, "2018": 1}},
                    {"id": "W2", "year": 2018, "citations_by_year": {}}]},
  {"researcher_id": "A2", "institute_id": "I1", "publications": []}
])";

std::string field_of(std::string_view text) {
    try {
        parse_dataset(text);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::malformed_payload);
        return e.field();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("dataset parses researchers and per-year citations") {
    const auto records = parse_dataset(std::string_view(kDataset));
    REQUIRE(records.size() == 2);
    CHECK(records[0].researcher_id == "A1");
    CHECK(records[0].institute_id == "I1");
    REQUIRE(records[0].publications.size() == 2);
    CHECK(records[0].publications[0].year == 2016);
    CHECK(records[0].publications[0].citations_by_year.at(2017) == 3);
    CHECK(records[1].publications.empty());
}

TEST_CASE("dataset round-trips through JSON and disk") {
    const auto records = parse_dataset(std::string_view(kDataset));
    const auto again = parse_dataset(dataset_to_json(records));
    CHECK(dataset_to_json(again) == dataset_to_json(records));

    const auto path = std::filesystem::temp_directory_path() / "scifund_dataset_test.json";
    save_dataset(path, records);
    CHECK(dataset_to_json(load_dataset(path)) == dataset_to_json(records));
    std::filesystem::remove(path);
}

TEST_CASE("malformed datasets name the offending field") {
    CHECK(field_of("{}") == "$");
    CHECK(field_of("not json") == "$");
    CHECK(field_of(R"([{"institute_id": "I", "publications": []}])") == "[0].researcher_id");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I",
        "publications": [{"id": "W", "year": 2016}]}])") == "[0].publications[0].citations_by_year");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I",
        "publications": [{"id": "W", "year": 2016, "citations_by_year": [1, 2]}]}])") ==
          "[0].publications[0].citations_by_year");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I",
        "publications": [{"id": "W", "year": 2016, "citations_by_year": {"x": 1}}]}])") ==
          "[0].publications[0].citations_by_year.x");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I",
        "publications": [{"id": "W", "year": 2016, "citations_by_year": {"2017": -1}}]}])") ==
          "[0].publications[0].citations_by_year.2017");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I",
        "publications": [{"id": "W", "year": "2016", "citations_by_year": {}}]}])") ==
          "[0].publications[0].year");
    CHECK(field_of(R"([{"researcher_id": "A", "institute_id": "I", "publications": []},
                       {"researcher_id": "A", "institute_id": "I", "publications": []}])") ==
          "[1].researcher_id");
}

TEST_CASE("missing dataset file is an error") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/dataset.json"), Error);
}
