#pragma once
// File and wire formats shared by the CLI and the HTTP service.
//
//   cohort CSV       researcher_id,s,o   (or researcher_id,s for score-only tables)
//   allocation CSV   researcher_id,share
//   probabilities    researcher_id,p
//   histogram CSV    bins=<n> then n rows of n values; row = s bin, column = o bin
//   backtest CSV     one row per grid point
//
// Floating values are written as the shortest decimal string that parses
// back to the same double.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scifund/alloc_det.hpp"
#include "scifund/alloc_stoch.hpp"
#include "scifund/backtest.hpp"
#include "scifund/cohort.hpp"

namespace scifund {

std::string format_decimal(double v);
// Accepts a JSON number or a decimal string.
double json_decimal(const nlohmann::json& v, const std::string& field);
double parse_decimal(std::string_view text, const std::string& field);

std::vector<double> parse_decimal_list(std::string_view text, const std::string& field);

std::string cohort_to_csv(const Cohort& cohort);
Cohort cohort_from_csv(std::string_view text, std::string label = {});

nlohmann::json cohort_metadata(const CohortBuild& build);
nlohmann::json cohort_metadata(const PooledBuild& build);

std::string allocation_to_csv(const Allocation& alloc, const std::vector<std::string>& ids);
std::string probabilities_to_csv(const LotteryPolicy& policy, const std::vector<std::string>& ids);
std::string histogram_to_csv(const Histogram2D& h);
std::string curve_to_csv(const std::vector<std::pair<double, std::vector<CurvePoint>>>& curves);
std::string backtest_to_csv(const BacktestResult& result);

nlohmann::json params_to_json(const DetParams& p);
nlohmann::json params_to_json(const StochParams& p);
DetParams det_params_from_json(const nlohmann::json& j);
StochParams stoch_params_from_json(const nlohmann::json& j);

nlohmann::json allocation_metadata(const Allocation& alloc);
nlohmann::json draw_to_json(const DrawResult& draw, const std::vector<std::string>& ids);
nlohmann::json backtest_summary(const BacktestResult& result);
nlohmann::json backtest_to_json(const BacktestResult& result);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace scifund
