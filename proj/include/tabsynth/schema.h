#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tabsynth/table.h"

namespace tabsynth {

struct ContinuousKind {
  bool log_transform = false;
  bool operator==(const ContinuousKind&) const = default;
};

struct CategoricalKind {
  bool operator==(const CategoricalKind&) const = default;
};

// Numeric column with point masses at `categorical_values` (and/or missing cells)
// on top of a continuous part.
struct MixedKind {
  std::vector<double> categorical_values;
  bool log_transform = false;
  bool operator==(const MixedKind&) const = default;
};

using ColumnKind = std::variant<ContinuousKind, CategoricalKind, MixedKind>;

std::string kind_name(const ColumnKind& kind);
bool is_numeric_kind(const ColumnKind& kind);

struct ColumnSpec {
  std::string name;
  ColumnKind kind;
  bool include = true;
  bool target = false;
  bool operator==(const ColumnSpec&) const = default;
};

enum class ProblemKind { None, Binary, Multiclass };

std::string problem_kind_name(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

struct TargetSpec {
  ProblemKind kind = ProblemKind::None;
  std::string column;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;

  std::vector<ColumnSpec> included() const;
  // n: included continuous + mixed columns
  std::size_t numeric_count() const;
  // m: included categorical columns
  std::size_t categorical_count() const;
  std::size_t included_count() const { return numeric_count() + categorical_count(); }

  const ColumnSpec* target() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnSpec> columns_;
};

struct InferenceOptions {
  std::size_t max_categorical_distinct = 25;
  double spike_fraction = 0.20;
  double long_tail_skewness = 10.0;
};

Schema infer_schema(const Table& table, const InferenceOptions& options = {});

struct ColumnOverride {
  std::string column;
  std::optional<ColumnKind> kind;
  std::optional<bool> include;
  std::optional<bool> target;
};

Schema apply_overrides(const Schema& schema, std::span<const ColumnOverride> overrides);

// Problem kind from the target column's observed class count.
TargetSpec resolve_target(const Schema& schema, const Table& table);

// Throws InputError when a schema column is absent from the table or a numeric kind
// is assigned to a column with non-numeric tokens.
void check_schema_matches(const Schema& schema, const Table& table);

nlohmann::json to_json(const ColumnKind& kind);
ColumnKind column_kind_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
std::vector<ColumnOverride> overrides_from_json(const nlohmann::json& j);

}  // namespace tabsynth
