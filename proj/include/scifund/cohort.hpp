#pragma once
// Windowed bibliometric indicators, within-institute percentile ranks and
// the aggregated past/future performance signals.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace scifund {

struct Publication {
    std::string id;
    int year = 0;
    std::map<int, std::int64_t> citations_by_year;
};

struct ResearcherRecord {
    std::string researcher_id;
    std::string institute_id;
    std::vector<Publication> publications;
};

// Inclusive of both endpoint years.
struct Window {
    int start_year = 0;
    int end_year = 0;

    bool contains(int year) const noexcept { return year >= start_year && year <= end_year; }
    bool overlaps(const Window& other) const noexcept {
        return start_year <= other.end_year && other.start_year <= end_year;
    }
    void validate() const;

    // [Y-5, Y-1] and [Y, Y+4]
    static Window reference_for(int year) { return {year - 5, year - 1}; }
    static Window future_for(int year) { return {year, year + 4}; }
};

struct RawIndicators {
    std::int64_t productivity = 0;
    double avg_citations = 0.0;
    std::int64_t max_citations = 0;
};

struct IndicatorSet {
    RawIndicators raw;
    double productivity_perc = 0.0;
    double avg_cit_perc = 0.0;
    double max_cit_perc = 0.0;
    double agg_perc = 0.0;
};

struct CohortMember {
    std::string researcher_id;
    double s = 0.0;  // reference score (avgPerc1)
    double o = 0.0;  // future outcome (avgPerc2)
};

struct Cohort {
    std::string label;
    std::vector<CohortMember> members;
    bool has_outcomes = true;

    std::size_t size() const noexcept { return members.size(); }
    std::vector<double> scores() const;
    std::vector<double> outcomes() const;
    std::vector<std::string> ids() const;

    // N >= 2, distinct ids, s and o in [0,1].
    void validate() const;
};

void validate_record(const ResearcherRecord& record);

RawIndicators compute_window_indicators(const ResearcherRecord& record, const Window& window);

std::vector<ResearcherRecord> filter_eligible(const std::vector<ResearcherRecord>& records,
                                              const Window& reference);

// 1-based ranks, ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// (avg_rank - 1) / (n - 1). Throws for n < 2.
std::vector<double> percentile_normalize(std::span<const double> values);

// Compensated (Neumaier) mean; percentile columns average exactly 0.5.
double column_mean(std::span<const double> values);

double aggregate_signal(double prod_perc, double avg_cit_perc, double max_cit_perc);

// Everything computed while building a cohort; `cohort` alone is the usual
// product, the rest feeds metadata sidecars and the joint-distribution plots.
struct CohortBuild {
    Cohort cohort;
    Window reference;
    Window future;
    std::vector<IndicatorSet> reference_indicators;
    std::vector<IndicatorSet> future_indicators;
    std::size_t excluded = 0;
};

CohortBuild build_cohort_detailed(const std::vector<ResearcherRecord>& records,
                                  const Window& reference, const Window& future,
                                  std::string label = {});

Cohort build_cohort(const std::vector<ResearcherRecord>& records, const Window& reference,
                    const Window& future);

// Normalizes within each institute and concatenates the per-institute
// cohorts. Institutes with fewer than two eligible researchers are skipped
// and listed in `skipped`.
struct PooledBuild {
    Cohort cohort;
    std::vector<CohortBuild> institutes;
    std::vector<std::string> skipped;
};

PooledBuild build_pooled_cohort(const std::vector<ResearcherRecord>& records,
                                const Window& reference, const Window& future);

double spearman(std::span<const double> x, std::span<const double> y);

struct Histogram2D {
    std::size_t bins = 0;
    std::vector<double> cells;  // row-major, row = s bin, column = o bin

    double at(std::size_t row, std::size_t col) const { return cells[row * bins + col]; }
    double total() const;
};

Histogram2D joint_histogram(std::span<const double> x, std::span<const double> y, std::size_t bins,
                            bool smooth = false);

Histogram2D joint_histogram(const Cohort& cohort, std::size_t bins, bool smooth = false);

}  // namespace scifund
