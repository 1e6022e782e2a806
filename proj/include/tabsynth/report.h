#pragma once

#include <string>

#include <json.hpp>

#include "tabsynth/privacy.h"
#include "tabsynth/schema.h"
#include "tabsynth/similarity.h"
#include "tabsynth/table.h"
#include "tabsynth/utility.h"

namespace tabsynth {

struct ReportOptions {
  bool privacy = true;
  PrivacyOptions privacy_options{5.0, 5000, 0};
  std::size_t ecdf_points = 200;
};

// Empirical CDF sampled at up to `points` order statistics: pairs (x, F(x)).
std::vector<std::pair<double, double>> ecdf_series(std::vector<double> values, std::size_t points);

nlohmann::json to_json(const SimilarityReport& r);
nlohmann::json to_json(const PrivacyReport& r);
nlohmann::json to_json(const UtilityReport& r);

// Full report: similarity, privacy (optional), utility (when `real_test` is given and
// the schema has a target) and per-column distribution series.
nlohmann::json evaluation_report(const Table& real, const Table& synthetic, const Schema& schema,
                                 const Table* real_test = nullptr, const ReportOptions& options = {});

// Plain-text tables for terminals.
std::string format_report(const nlohmann::json& report);

}  // namespace tabsynth
