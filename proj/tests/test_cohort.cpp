#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scifund/cohort.hpp"
#include "scifund/error.hpp"

using namespace scifund;
using Catch::Matchers::WithinAbs;

namespace {

Publication pub(int year, std::map<int, std::int64_t> cites) { return {"W" + std::to_string(year), year, cites}; }

ResearcherRecord researcher(std::string id, std::string inst, std::vector<Publication> pubs) {
    return {std::move(id), std::move(inst), std::move(pubs)};
}

}  // namespace

TEST_CASE("window indicators count only in-window works and citations") {
    const auto r = researcher("A", "I1",
                              {pub(2015, {{2015, 1}, {2016, 3}, {2020, 5}}),
                               pub(2017, {{2017, 2}, {2018, 2}}),
                               pub(2021, {{2021, 9}})});
    const auto ind = compute_window_indicators(r, {2015, 2019});
    CHECK(ind.productivity == 2);
    CHECK(ind.avg_citations == 4.0);
    CHECK(ind.max_citations == 4);

    const auto future = compute_window_indicators(r, {2020, 2024});
    CHECK(future.productivity == 1);
    CHECK(future.avg_citations == 9.0);
    CHECK(future.max_citations == 9);

    const auto empty = compute_window_indicators(r, {2000, 2004});
    CHECK(empty.productivity == 0);
    CHECK(empty.avg_citations == 0.0);
}

TEST_CASE("windows follow the split year") {
    CHECK(Window::reference_for(2020).start_year == 2015);
    CHECK(Window::reference_for(2020).end_year == 2019);
    CHECK(Window::future_for(2020).start_year == 2020);
    CHECK(Window::future_for(2020).end_year == 2024);
    CHECK_FALSE(Window::reference_for(2020).overlaps(Window::future_for(2020)));
    CHECK_THROWS_AS(Window({2020, 2019}).validate(), Error);
}

TEST_CASE("eligibility needs two reference-window publications") {
    const std::vector<ResearcherRecord> records{
        researcher("A", "I", {pub(2015, {}), pub(2016, {})}),
        researcher("B", "I", {pub(2015, {}), pub(2021, {})}),
    };
    const auto eligible = filter_eligible(records, {2015, 2019});
    REQUIRE(eligible.size() == 1);
    CHECK(eligible[0].researcher_id == "A");
}

TEST_CASE("average ranks share ties") {
    const std::vector<double> v{10, 20, 20, 30};
    CHECK(average_ranks(v) == std::vector<double>{1, 2.5, 2.5, 4});
    const std::vector<double> all_equal{5, 5, 5};
    CHECK(average_ranks(all_equal) == std::vector<double>{2, 2, 2});
}

TEST_CASE("percentile normalisation maps ranks onto [0,1]") {
    const std::vector<double> v{3, 1, 2};
    CHECK(percentile_normalize(v) == std::vector<double>{1, 0, 0.5});
    const std::vector<double> tied{0, 0, 7, 7, 9};
    CHECK(percentile_normalize(tied) == std::vector<double>{0.125, 0.125, 0.625, 0.625, 1});
    const std::vector<double> one{1};
    CHECK_THROWS_WITH(percentile_normalize(one), "cohort too small to rank");
}

TEST_CASE("percentile columns average one half and ignore monotone transforms") {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + gen() % 300;
        std::vector<double> v(n);
        for (auto& x : v) x = static_cast<double>(gen() % 50);  // plenty of ties
        const auto p = percentile_normalize(v);
        CHECK(column_mean(p) == 0.5);
        const auto ranks = average_ranks(v);
        CHECK(std::accumulate(ranks.begin(), ranks.end(), 0.0) == static_cast<double>(n * (n + 1)) / 2.0);

        std::vector<double> t(n);
        std::transform(v.begin(), v.end(), t.begin(), [](double x) { return std::exp(0.1 * x) + 3.0; });
        CHECK(percentile_normalize(t) == p);
    }
}

TEST_CASE("column mean compensates rounding") {
    const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    CHECK(column_mean(v) == 0.5);
    const std::vector<double> none;
    CHECK_THROWS_AS(column_mean(none), Error);
}

TEST_CASE("aggregate signal is the mean of three percentiles") {
    CHECK(aggregate_signal(0.0, 0.5, 1.0) == 0.5);
    CHECK_THROWS_AS(aggregate_signal(1.5, 0, 0), Error);
}

TEST_CASE("build_cohort computes within-institute percentiles") {
    const std::vector<ResearcherRecord> records{
        researcher("A", "I", {pub(2015, {{2016, 10}}), pub(2016, {{2017, 10}}), pub(2020, {{2021, 5}})}),
        researcher("B", "I", {pub(2015, {{2016, 1}}), pub(2016, {}), pub(2017, {}), pub(2021, {{2022, 1}})}),
        researcher("C", "I", {pub(2015, {}), pub(2016, {}), pub(2021, {{2022, 50}}), pub(2022, {})}),
        researcher("D", "I", {pub(2015, {})}),
    };
    const auto build = build_cohort_detailed(records, {2015, 2019}, {2020, 2024});
    CHECK(build.excluded == 1);
    REQUIRE(build.cohort.size() == 3);
    CHECK(build.cohort.label == "I");
    // Reference: prod A2 B3 C2, avg A10 B1/3 C0, max A10 B1 C0.
    const auto& a = build.cohort.members[0];
    const auto& b = build.cohort.members[1];
    const auto& c = build.cohort.members[2];
    CHECK_THAT(a.s, WithinAbs((0.25 + 1 + 1) / 3, 1e-15));
    CHECK_THAT(b.s, WithinAbs((1 + 0.5 + 0.5) / 3, 1e-15));
    CHECK_THAT(c.s, WithinAbs((0.25 + 0 + 0) / 3, 1e-15));
    // Future: prod A1 B1 C2, avg A5 B1 C25, max A5 B1 C50.
    CHECK_THAT(a.o, WithinAbs((0.25 + 0.5 + 0.5) / 3, 1e-15));
    CHECK_THAT(b.o, WithinAbs((0.25 + 0 + 0) / 3, 1e-15));
    CHECK_THAT(c.o, WithinAbs(1.0, 1e-15));
}

TEST_CASE("build_cohort rejects bad input") {
    const std::vector<ResearcherRecord> ok{
        researcher("A", "I", {pub(2015, {}), pub(2016, {})}),
        researcher("B", "I", {pub(2015, {}), pub(2016, {})}),
    };
    CHECK_THROWS_WITH(build_cohort(ok, {2015, 2020}, {2020, 2024}), "reference and future windows overlap");

    auto two_inst = ok;
    two_inst[1].institute_id = "J";
    CHECK_THROWS_AS(build_cohort(two_inst, {2015, 2019}, {2020, 2024}), Error);

    auto dup = ok;
    dup[1].researcher_id = "A";
    CHECK_THROWS_AS(build_cohort(dup, {2015, 2019}, {2020, 2024}), Error);

    const std::vector<ResearcherRecord> lonely{ok[0]};
    CHECK_THROWS_WITH(build_cohort(lonely, {2015, 2019}, {2020, 2024}), "fewer than 2 eligible researchers");
}

TEST_CASE("pooled cohorts normalise per institute and skip tiny ones") {
    const std::vector<ResearcherRecord> records{
        researcher("A", "I", {pub(2015, {{2016, 4}}), pub(2016, {})}),
        researcher("B", "I", {pub(2015, {}), pub(2016, {})}),
        researcher("C", "J", {pub(2015, {{2016, 1}}), pub(2016, {})}),
        researcher("D", "J", {pub(2015, {}), pub(2016, {})}),
        researcher("E", "K", {pub(2015, {}), pub(2016, {})}),
    };
    const auto pooled = build_pooled_cohort(records, {2015, 2019}, {2020, 2024});
    CHECK(pooled.cohort.size() == 4);
    CHECK(pooled.skipped == std::vector<std::string>{"K"});
    REQUIRE(pooled.institutes.size() == 2);
    // Within each institute the top researcher gets the same score.
    CHECK(pooled.cohort.members[0].s == pooled.cohort.members[2].s);
    CHECK(pooled.cohort.members[1].s == pooled.cohort.members[3].s);
}

TEST_CASE("spearman") {
    const std::vector<double> x{1, 2, 3}, y{2, 1, 3};
    CHECK_THAT(spearman(x, y), WithinAbs(0.5, 1e-15));
    CHECK(spearman(x, x) == 1.0);
    const std::vector<double> rev{3, 2, 1};
    CHECK(spearman(x, rev) == -1.0);
    const std::vector<double> flat{1, 1, 1};
    CHECK_THROWS_AS(spearman(x, flat), Error);
    const std::vector<double> two{1, 2};
    CHECK_THROWS_AS(spearman(two, two), Error);
    CHECK_THROWS_AS(spearman(x, two), Error);
}

TEST_CASE("joint histogram bins and smoothing") {
    const std::vector<double> s{0.0, 0.5, 1.0, 1.0}, o{0.0, 0.5, 1.0, 0.0};
    const auto h = joint_histogram(s, o, 2);
    CHECK(h.at(0, 0) == 1);
    CHECK(h.at(1, 1) == 2);  // 0.5 and the right-closed 1.0
    CHECK(h.at(1, 0) == 1);
    CHECK(h.total() == 4);

    const std::vector<double> corner{0.0};
    const auto sm = joint_histogram(corner, corner, 3, true);
    CHECK_THAT(sm.at(0, 0), WithinAbs(4.0 / 9, 1e-15));
    CHECK_THAT(sm.at(0, 1), WithinAbs(2.0 / 9, 1e-15));
    CHECK_THAT(sm.at(1, 1), WithinAbs(1.0 / 9, 1e-15));
    CHECK(sm.at(2, 2) == 0.0);

    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(400), y(400);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(gen), y[i] = u(gen);
    CHECK_THAT(joint_histogram(x, y, 10, true).total(), WithinAbs(400.0, 1e-9));
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(joint_histogram(bad, bad, 4), Error);
}
