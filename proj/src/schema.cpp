#include "tabsynth/schema.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "tabsynth/error.h"

namespace tabsynth {

std::string kind_name(const ColumnKind& kind) {
  if (std::holds_alternative<ContinuousKind>(kind)) return "continuous";
  if (std::holds_alternative<CategoricalKind>(kind)) return "categorical";
  return "mixed";
}

bool is_numeric_kind(const ColumnKind& kind) { return !std::holds_alternative<CategoricalKind>(kind); }

std::string problem_kind_name(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::None: return "none";
    case ProblemKind::Binary: return "binary";
    case ProblemKind::Multiclass: return "multiclass";
  }
  return "none";
}

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "none") return ProblemKind::None;
  if (name == "binary") return ProblemKind::Binary;
  if (name == "multiclass") return ProblemKind::Multiclass;
  throw InputError("unknown problem type '" + std::string(name) + "'");
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::unordered_set<std::string> names;
  std::size_t targets = 0;
  std::size_t included = 0;
  for (const auto& c : columns_) {
    if (!names.insert(c.name).second) throw InputError("duplicate column name '" + c.name + "'");
    if (c.include) ++included;
    if (c.target) {
      ++targets;
      if (!c.include) throw InputError("target column '" + c.name + "' cannot be excluded");
      if (!std::holds_alternative<CategoricalKind>(c.kind)) {
        throw InputError("target column '" + c.name + "' must be categorical");
      }
    }
    if (const auto* mixed = std::get_if<MixedKind>(&c.kind)) {
      std::set<double> unique(mixed->categorical_values.begin(), mixed->categorical_values.end());
      if (unique.size() != mixed->categorical_values.size()) {
        throw InputError("mixed column '" + c.name + "' lists duplicate categorical values");
      }
      for (double v : mixed->categorical_values) {
        if (!std::isfinite(v)) throw InputError("mixed column '" + c.name + "' has a non-finite value");
      }
    }
  }
  if (targets > 1) throw InputError("at most one target column is allowed");
  if (included == 0) throw InputError("schema has no included columns");
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

const ColumnSpec& Schema::column(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw InputError("unknown column '" + std::string(name) + "'");
  return columns_[*idx];
}

std::vector<ColumnSpec> Schema::included() const {
  std::vector<ColumnSpec> out;
  for (const auto& c : columns_) {
    if (c.include) out.push_back(c);
  }
  return out;
}

std::size_t Schema::numeric_count() const {
  return static_cast<std::size_t>(std::count_if(columns_.begin(), columns_.end(), [](const ColumnSpec& c) {
    return c.include && is_numeric_kind(c.kind);
  }));
}

std::size_t Schema::categorical_count() const {
  return static_cast<std::size_t>(std::count_if(columns_.begin(), columns_.end(), [](const ColumnSpec& c) {
    return c.include && !is_numeric_kind(c.kind);
  }));
}

const ColumnSpec* Schema::target() const {
  for (const auto& c : columns_) {
    if (c.target) return &c;
  }
  return nullptr;
}

namespace {

double skewness(const std::vector<double>& values) {
  if (values.size() < 3) return 0.0;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

ColumnKind infer_kind(const Column& column, const InferenceOptions& options) {
  if (!column.all_numeric()) return CategoricalKind{};

  std::map<double, std::size_t> counts;
  std::vector<double> values;
  values.reserve(column.size());
  for (std::size_t r = 0; r < column.size(); ++r) {
    if (auto v = column.number(r)) {
      ++counts[*v];
      values.push_back(*v);
    }
  }
  if (counts.size() <= options.max_categorical_distinct) return CategoricalKind{};

  // Point masses holding at least spike_fraction of the numeric cells, provided the
  // remainder still looks continuous.
  std::vector<double> spikes;
  std::size_t spike_mass = 0;
  for (const auto& [value, count] : counts) {
    if (static_cast<double>(count) >= options.spike_fraction * static_cast<double>(values.size())) {
      spikes.push_back(value);
      spike_mass += count;
    }
  }
  const bool remainder_continuous =
      counts.size() - spikes.size() > options.max_categorical_distinct && spike_mass < values.size();
  if (!remainder_continuous) spikes.clear();

  std::vector<double> bulk;
  bulk.reserve(values.size());
  for (double v : values) {
    if (!std::binary_search(spikes.begin(), spikes.end(), v)) bulk.push_back(v);
  }
  const bool long_tail = skewness(bulk) > options.long_tail_skewness;

  if (!spikes.empty() || column.missing_count() > 0) return MixedKind{spikes, long_tail};
  return ContinuousKind{long_tail};
}

}  // namespace

Schema infer_schema(const Table& table, const InferenceOptions& options) {
  if (table.empty()) throw InputError("cannot infer a schema from an empty table");
  std::vector<ColumnSpec> specs;
  specs.reserve(table.cols());
  for (const auto& column : table.columns()) {
    specs.push_back(ColumnSpec{column.name(), infer_kind(column, options), true, false});
  }
  return Schema(std::move(specs));
}

Schema apply_overrides(const Schema& schema, std::span<const ColumnOverride> overrides) {
  std::vector<ColumnSpec> specs = schema.columns();
  for (const auto& o : overrides) {
    auto it = std::find_if(specs.begin(), specs.end(), [&](const ColumnSpec& c) { return c.name == o.column; });
    if (it == specs.end()) throw InputError("unknown column '" + o.column + "'");
    if (o.target) {
      if (*o.target) {
        for (auto& c : specs) c.target = false;
        if (!o.kind) it->kind = CategoricalKind{};
      }
      it->target = *o.target;
    }
    if (o.kind) it->kind = *o.kind;
    if (o.include) {
      if (!*o.include && it->target) throw InputError("target column '" + o.column + "' cannot be excluded");
      it->include = *o.include;
    }
  }
  return Schema(std::move(specs));
}

TargetSpec resolve_target(const Schema& schema, const Table& table) {
  const ColumnSpec* target = schema.target();
  if (!target) return {};
  const auto& column = table.column(target->name);
  std::set<std::string> classes;
  for (const auto& cell : column.cells()) classes.insert(cell.value_or(std::string{}));
  if (classes.size() < 2) throw InputError("target column '" + target->name + "' has fewer than 2 classes");
  return TargetSpec{classes.size() == 2 ? ProblemKind::Binary : ProblemKind::Multiclass, target->name};
}

void check_schema_matches(const Schema& schema, const Table& table) {
  for (const auto& c : schema.columns()) {
    if (!table.find(c.name)) throw InputError("schema column '" + c.name + "' not found in table");
    if (c.include && is_numeric_kind(c.kind) && !table.column(c.name).all_numeric()) {
      throw InputError("column '" + c.name + "' has non-numeric values and cannot be " + kind_name(c.kind));
    }
  }
}

nlohmann::json to_json(const ColumnKind& kind) {
  nlohmann::json j;
  j["type"] = kind_name(kind);
  if (const auto* c = std::get_if<ContinuousKind>(&kind)) j["log_transform"] = c->log_transform;
  if (const auto* m = std::get_if<MixedKind>(&kind)) {
    j["categorical_values"] = m->categorical_values;
    j["log_transform"] = m->log_transform;
  }
  return j;
}

ColumnKind column_kind_from_json(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "continuous") return ContinuousKind{j.value("log_transform", false)};
    if (type == "categorical") return CategoricalKind{};
    if (type == "mixed") {
      return MixedKind{j.value("categorical_values", std::vector<double>{}), j.value("log_transform", false)};
    }
    throw InputError("unknown column type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad column kind: ") + e.what());
  }
}

nlohmann::json to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema.columns()) {
    cols.push_back({{"name", c.name}, {"kind", to_json(c.kind)}, {"include", c.include}, {"target", c.target}});
  }
  return {{"version", 1}, {"columns", cols}};
}

Schema schema_from_json(const nlohmann::json& j) {
  try {
    std::vector<ColumnSpec> specs;
    for (const auto& c : j.at("columns")) {
      specs.push_back(ColumnSpec{c.at("name").get<std::string>(), column_kind_from_json(c.at("kind")),
                                 c.value("include", true), c.value("target", false)});
    }
    return Schema(std::move(specs));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad schema document: ") + e.what());
  }
}

std::vector<ColumnOverride> overrides_from_json(const nlohmann::json& j) {
  try {
    const auto& list = j.is_array() ? j : j.at("overrides");
    std::vector<ColumnOverride> out;
    for (const auto& o : list) {
      ColumnOverride ov;
      ov.column = o.at("column").get<std::string>();
      if (o.contains("kind")) ov.kind = column_kind_from_json(o.at("kind"));
      if (o.contains("include")) ov.include = o.at("include").get<bool>();
      if (o.contains("target")) ov.target = o.at("target").get<bool>();
      out.push_back(std::move(ov));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad overrides document: ") + e.what());
  }
}

}  // namespace tabsynth
