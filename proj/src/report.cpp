#include "tabsynth/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json scores_json(const std::optional<Scores>& s) {
  if (!s) return nullptr;
  return {{"accuracy", number_or_null(s->accuracy)}, {"f1", number_or_null(s->f1)}, {"auc", number_or_null(s->auc)}};
}

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> present(const Column& c) {
  std::vector<double> out;
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (const auto v = c.number(r)) out.push_back(*v);
  }
  return out;
}

std::string fixed(const nlohmann::json& v, int digits = 4) {
  if (!v.is_number()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

}  // namespace

std::vector<std::pair<double, double>> ecdf_series(std::vector<double> values, std::size_t points) {
  std::vector<std::pair<double, double>> out;
  if (values.empty() || points == 0) return out;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t k = std::min(points, n);
  for (std::size_t i = 0; i < k; ++i) {
    // Evenly spaced order statistics including both extremes.
    const std::size_t idx = k == 1 ? n - 1 : i * (n - 1) / (k - 1);
    const double x = values[idx];
    const auto upto = std::upper_bound(values.begin(), values.end(), x) - values.begin();
    if (!out.empty() && out.back().first == x) continue;
    out.emplace_back(x, static_cast<double>(upto) / static_cast<double>(n));
  }
  return out;
}

nlohmann::json to_json(const SimilarityReport& r) {
  nlohmann::json j{{"jsd", r.jsd},
                   {"wd", r.wd},
                   {"wd_scaled", r.wd_scaled},
                   {"avg_jsd", r.avg_jsd},
                   {"avg_wd", r.avg_wd},
                   {"avg_wd_scaled", r.avg_wd_scaled},
                   {"diff_corr", r.diff_corr}};
  if (!r.real_association.columns.empty()) {
    j["association"] = {{"columns", r.real_association.columns},
                        {"categorical", r.real_association.categorical},
                        {"real", matrix_json(r.real_association.values)},
                        {"synthetic", matrix_json(r.synthetic_association.values)},
                        {"warnings", r.real_association.warnings}};
  }
  return j;
}

nlohmann::json to_json(const PrivacyReport& r) {
  return {{"dcr", {{"real_synthetic", r.dcr_real_synthetic}, {"real", r.dcr_real}, {"synthetic", r.dcr_synthetic}}},
          {"nndr",
           {{"real_synthetic", r.nndr_real_synthetic}, {"real", r.nndr_real}, {"synthetic", r.nndr_synthetic}}},
          {"rows", {{"real", r.real_rows}, {"synthetic", r.synthetic_rows}}}};
}

nlohmann::json to_json(const UtilityReport& r) {
  auto models = nlohmann::json::array();
  for (const auto& m : r.models) {
    models.push_back({{"model", m.model},
                      {"real", scores_json(m.real)},
                      {"synthetic", scores_json(m.synthetic)},
                      {"difference", scores_json(m.difference)},
                      {"error", m.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(m.error)}});
  }
  return {{"models", models}, {"average_difference", scores_json(r.average_difference)}, {"warnings", r.warnings}};
}

nlohmann::json evaluation_report(const Table& real, const Table& synthetic, const Schema& schema,
                                 const Table* real_test, const ReportOptions& options) {
  nlohmann::json j;
  j["rows"] = {{"real", real.rows()}, {"synthetic", synthetic.rows()}};
  j["similarity"] = to_json(similarity(real, synthetic, schema));
  j["privacy"] = options.privacy ? to_json(privacy(real, synthetic, schema, options.privacy_options)) : nullptr;
  if (real_test && schema.target()) {
    j["utility"] = to_json(ml_utility(real, synthetic, *real_test, schema, builtin_classifiers()));
    j["rows"]["test"] = real_test->rows();
  } else {
    j["utility"] = nullptr;
  }
  auto series = nlohmann::json::object();
  for (const auto& spec : schema.included()) {
    const Column& a = real.column(spec.name);
    const Column& b = synthetic.column(spec.name);
    if (std::holds_alternative<CategoricalKind>(spec.kind)) {
      const auto f = aligned_frequencies(a, b);
      series[spec.name] = {{"kind", "categorical"}, {"categories", f.categories}, {"real", f.real}, {"synthetic", f.synthetic}};
    } else {
      nlohmann::json s{{"kind", kind_name(spec.kind)},
                       {"real", ecdf_series(present(a), options.ecdf_points)},
                       {"synthetic", ecdf_series(present(b), options.ecdf_points)}};
      // Spike mass at each categorical value of a mixed column.
      if (const auto* mixed = std::get_if<MixedKind>(&spec.kind)) {
        auto spikes = nlohmann::json::array();
        for (const double v : mixed->categorical_values) {
          auto mass = [v](const Column& c) {
            std::size_t k = 0;
            for (std::size_t r = 0; r < c.size(); ++r) k += c.number(r) == v;
            return c.size() ? static_cast<double>(k) / static_cast<double>(c.size()) : 0.0;
          };
          spikes.push_back({{"value", v}, {"real", mass(a)}, {"synthetic", mass(b)}});
        }
        s["spikes"] = spikes;
      }
      auto missing = [](const Column& c) { return c.size() ? static_cast<double>(c.missing_count()) / static_cast<double>(c.size()) : 0.0; };
      s["missing"] = {{"real", missing(a)}, {"synthetic", missing(b)}};
      series[spec.name] = s;
    }
  }
  j["series"] = series;
  return j;
}

std::string format_report(const nlohmann::json& r) {
  std::ostringstream out;
  const auto& sim = r.at("similarity");
  out << "Statistical similarity\n";
  for (const auto& [col, v] : sim.at("jsd").items()) out << "  JSD  " << col << ": " << fixed(v) << "\n";
  for (const auto& [col, v] : sim.at("wd").items()) {
    out << "  WD   " << col << ": " << fixed(v) << " (scaled " << fixed(sim.at("wd_scaled").at(col)) << ")\n";
  }
  out << "  Avg JSD " << fixed(sim.at("avg_jsd")) << "  Avg WD " << fixed(sim.at("avg_wd")) << "  Avg WD scaled "
      << fixed(sim.at("avg_wd_scaled")) << "  Diff. Corr. " << fixed(sim.at("diff_corr")) << "\n";
  if (!r.at("privacy").is_null()) {
    const auto& p = r.at("privacy");
    out << "Privacy (5th percentile)\n"
        << "  DCR  R&S " << fixed(p["dcr"]["real_synthetic"]) << "  R " << fixed(p["dcr"]["real"]) << "  S "
        << fixed(p["dcr"]["synthetic"]) << "\n"
        << "  NNDR R&S " << fixed(p["nndr"]["real_synthetic"]) << "  R " << fixed(p["nndr"]["real"]) << "  S "
        << fixed(p["nndr"]["synthetic"]) << "\n";
  }
  if (!r.at("utility").is_null()) {
    out << "ML utility (real - synthetic)\n";
    for (const auto& m : r.at("utility").at("models")) {
      out << "  " << m.at("model").get<std::string>() << ": ";
      if (m.at("difference").is_null()) {
        out << "failed (" << m.at("error").get<std::string>() << ")\n";
        continue;
      }
      const auto& d = m.at("difference");
      out << "accuracy " << fixed(d["accuracy"]) << "  F1 " << fixed(d["f1"]) << "  AUC " << fixed(d["auc"]) << "\n";
    }
    const auto& avg = r.at("utility").at("average_difference");
    if (!avg.is_null()) {
      out << "  average: accuracy " << fixed(avg["accuracy"]) << "  F1 " << fixed(avg["f1"]) << "  AUC "
          << fixed(avg["auc"]) << "\n";
    }
  }
  return out.str();
}

}  // namespace tabsynth
