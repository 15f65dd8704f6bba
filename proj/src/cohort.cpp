#include "scifund/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "scifund/error.hpp"

namespace scifund {

void Window::validate() const {
    require(end_year >= start_year, "window end_year must not precede start_year", "window");
}

std::vector<double> Cohort::scores() const {
    std::vector<double> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.s);
    return out;
}

std::vector<double> Cohort::outcomes() const {
    std::vector<double> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.o);
    return out;
}

std::vector<std::string> Cohort::ids() const {
    std::vector<std::string> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(m.researcher_id);
    return out;
}

void Cohort::validate() const {
    require(members.size() >= 2, "cohort needs at least 2 members", "members");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& m = members[i];
        const std::string where = "members[" + std::to_string(i) + "]";
        require(seen.insert(m.researcher_id).second,
                "duplicate researcher_id '" + m.researcher_id + "'", where + ".researcher_id");
        require(std::isfinite(m.s) && m.s >= 0.0 && m.s <= 1.0, "s must lie in [0,1]", where + ".s");
        if (has_outcomes)
            require(std::isfinite(m.o) && m.o >= 0.0 && m.o <= 1.0, "o must lie in [0,1]",
                    where + ".o");
    }
}

void validate_record(const ResearcherRecord& record) {
    for (std::size_t i = 0; i < record.publications.size(); ++i) {
        const auto& pub = record.publications[i];
        const std::string where = record.researcher_id + ".publications[" + std::to_string(i) + "]";
        require(pub.year >= 1900 && pub.year <= 2100, "publication year outside [1900, 2100]",
                where + ".year");
        for (const auto& [year, count] : pub.citations_by_year)
            require(count >= 0, "negative citation count", where + ".citations_by_year");
    }
}

RawIndicators compute_window_indicators(const ResearcherRecord& record, const Window& window) {
    window.validate();
    RawIndicators out;
    std::int64_t total = 0;
    for (const auto& pub : record.publications) {
        if (!window.contains(pub.year)) continue;
        ++out.productivity;
        std::int64_t windowed = 0;
        for (auto it = pub.citations_by_year.lower_bound(window.start_year);
             it != pub.citations_by_year.end() && it->first <= window.end_year; ++it)
            windowed += it->second;
        total += windowed;
        out.max_citations = std::max(out.max_citations, windowed);
    }
    if (out.productivity > 0)
        out.avg_citations = static_cast<double>(total) / static_cast<double>(out.productivity);
    return out;
}

std::vector<ResearcherRecord> filter_eligible(const std::vector<ResearcherRecord>& records,
                                              const Window& reference) {
    std::vector<ResearcherRecord> out;
    for (const auto& r : records) {
        const auto in_window = std::count_if(r.publications.begin(), r.publications.end(),
                                             [&](const Publication& p) { return reference.contains(p.year); });
        if (in_window >= 2) out.push_back(r);
    }
    return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
        const double rank = 0.5 * static_cast<double>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::vector<double> percentile_normalize(std::span<const double> values) {
    require(values.size() >= 2, "cohort too small to rank", "values");
    for (double v : values) require(std::isfinite(v), "values must be finite", "values");
    auto ranks = average_ranks(values);
    const double denom = static_cast<double>(values.size() - 1);
    for (auto& r : ranks) r = (r - 1.0) / denom;
    return ranks;
}

double column_mean(std::span<const double> values) {
    require(!values.empty(), "mean of an empty column", "values");
    double sum = 0.0, carry = 0.0;
    for (double v : values) {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    return (sum + carry) / static_cast<double>(values.size());
}

double aggregate_signal(double prod_perc, double avg_cit_perc, double max_cit_perc) {
    for (double v : {prod_perc, avg_cit_perc, max_cit_perc})
        require(v >= 0.0 && v <= 1.0, "percentile inputs must lie in [0,1]");
    return (prod_perc + avg_cit_perc + max_cit_perc) / 3.0;
}

namespace {

std::vector<IndicatorSet> normalized_indicators(const std::vector<ResearcherRecord>& records,
                                                const Window& window) {
    const std::size_t n = records.size();
    std::vector<IndicatorSet> sets(n);
    std::vector<double> prod(n), avg(n), max(n);
    for (std::size_t i = 0; i < n; ++i) {
        sets[i].raw = compute_window_indicators(records[i], window);
        prod[i] = static_cast<double>(sets[i].raw.productivity);
        avg[i] = sets[i].raw.avg_citations;
        max[i] = static_cast<double>(sets[i].raw.max_citations);
    }
    const auto prod_p = percentile_normalize(prod);
    const auto avg_p = percentile_normalize(avg);
    const auto max_p = percentile_normalize(max);
    for (std::size_t i = 0; i < n; ++i) {
        sets[i].productivity_perc = prod_p[i];
        sets[i].avg_cit_perc = avg_p[i];
        sets[i].max_cit_perc = max_p[i];
        sets[i].agg_perc = aggregate_signal(prod_p[i], avg_p[i], max_p[i]);
    }
    return sets;
}

}  // namespace

CohortBuild build_cohort_detailed(const std::vector<ResearcherRecord>& records,
                                  const Window& reference, const Window& future,
                                  std::string label) {
    reference.validate();
    future.validate();
    require(!reference.overlaps(future), "reference and future windows overlap", "future");
    std::set<std::string> institutes;
    std::unordered_set<std::string> ids;
    for (const auto& r : records) {
        validate_record(r);
        institutes.insert(r.institute_id);
        require(ids.insert(r.researcher_id).second,
                "duplicate researcher_id '" + r.researcher_id + "'", "researcher_id");
    }
    require(institutes.size() <= 1,
            "records span several institutes; normalization is within-institute", "institute_id");

    CohortBuild out;
    out.reference = reference;
    out.future = future;
    const auto eligible = filter_eligible(records, reference);
    out.excluded = records.size() - eligible.size();
    require(eligible.size() >= 2, "fewer than 2 eligible researchers", "records");

    out.reference_indicators = normalized_indicators(eligible, reference);
    out.future_indicators = normalized_indicators(eligible, future);
    out.cohort.label = label.empty() && !institutes.empty() ? *institutes.begin() : label;
    out.cohort.members.reserve(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i)
        out.cohort.members.push_back({eligible[i].researcher_id, out.reference_indicators[i].agg_perc,
                                      out.future_indicators[i].agg_perc});
    return out;
}

Cohort build_cohort(const std::vector<ResearcherRecord>& records, const Window& reference,
                    const Window& future) {
    return build_cohort_detailed(records, reference, future).cohort;
}

PooledBuild build_pooled_cohort(const std::vector<ResearcherRecord>& records,
                                const Window& reference, const Window& future) {
    std::map<std::string, std::vector<ResearcherRecord>> by_institute;
    for (const auto& r : records) by_institute[r.institute_id].push_back(r);

    PooledBuild out;
    out.cohort.label = "pooled";
    for (const auto& [institute, group] : by_institute) {
        if (filter_eligible(group, reference).size() < 2) {
            out.skipped.push_back(institute);
            continue;
        }
        auto build = build_cohort_detailed(group, reference, future, institute);
        for (const auto& m : build.cohort.members) out.cohort.members.push_back(m);
        out.institutes.push_back(std::move(build));
    }
    require(out.cohort.members.size() >= 2, "fewer than 2 eligible researchers", "records");
    out.cohort.validate();
    return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "spearman: length mismatch");
    require(x.size() >= 3, "spearman: need at least 3 observations");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, "spearman: zero rank variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double Histogram2D::total() const { return std::accumulate(cells.begin(), cells.end(), 0.0); }

namespace {

std::size_t bin_of(double v, std::size_t bins) {
    const auto b = static_cast<std::size_t>(std::floor(v * static_cast<double>(bins)));
    return std::min(b, bins - 1);  // v = 1 lands in the last bin
}

// 3x3 binomial kernel; each cell's mass is spread over its in-grid
// neighbours with the kernel renormalized there, so the total is conserved.
Histogram2D smoothed(const Histogram2D& h) {
    static constexpr double kernel[3] = {1.0, 2.0, 1.0};
    Histogram2D out{h.bins, std::vector<double>(h.cells.size(), 0.0)};
    const auto n = static_cast<long>(h.bins);
    for (long r = 0; r < n; ++r) {
        for (long c = 0; c < n; ++c) {
            const double mass = h.cells[r * n + c];
            if (mass == 0.0) continue;
            double norm = 0.0;
            for (long dr = -1; dr <= 1; ++dr)
                for (long dc = -1; dc <= 1; ++dc)
                    if (r + dr >= 0 && r + dr < n && c + dc >= 0 && c + dc < n)
                        norm += kernel[dr + 1] * kernel[dc + 1];
            for (long dr = -1; dr <= 1; ++dr)
                for (long dc = -1; dc <= 1; ++dc)
                    if (r + dr >= 0 && r + dr < n && c + dc >= 0 && c + dc < n)
                        out.cells[(r + dr) * n + (c + dc)] +=
                            mass * kernel[dr + 1] * kernel[dc + 1] / norm;
        }
    }
    return out;
}

}  // namespace

Histogram2D joint_histogram(std::span<const double> x, std::span<const double> y, std::size_t bins,
                            bool smooth) {
    require(bins >= 2, "bins must be at least 2", "bins");
    require(x.size() == y.size(), "joint_histogram: length mismatch");
    Histogram2D h{bins, std::vector<double>(bins * bins, 0.0)};
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] >= 0.0 && x[i] <= 1.0 && y[i] >= 0.0 && y[i] <= 1.0,
                "histogram coordinates must lie in [0,1]");
        h.cells[bin_of(x[i], bins) * bins + bin_of(y[i], bins)] += 1.0;
    }
    return smooth ? smoothed(h) : h;
}

Histogram2D joint_histogram(const Cohort& cohort, std::size_t bins, bool smooth) {
    const auto s = cohort.scores();
    const auto o = cohort.outcomes();
    return joint_histogram(s, o, bins, smooth);
}

}  // namespace scifund
