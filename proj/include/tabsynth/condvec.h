#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "tabsynth/codec.h"
#include "tabsynth/matrix.h"

namespace tabsynth {

using Rng = std::mt19937_64;

// One conditionable one-hot segment of the encoding, placed in the conditional vector.
struct ConditionColumn {
  std::size_t segment = 0;        // index into EncodingLayout::segments
  std::size_t source_offset = 0;  // offset of the segment in the encoded row
  std::size_t offset = 0;         // offset in the conditional vector
  std::size_t width = 0;
};

struct ConditionLayout {
  std::vector<ConditionColumn> columns;
  std::size_t width = 0;
};

ConditionLayout build_condition_layout(const EncodingLayout& layout);

// Exactly one bit set, at columns[column].offset + local.
struct ConditionalVector {
  std::size_t column = 0;
  std::size_t local = 0;
  std::size_t bit(const ConditionLayout& layout) const { return layout.columns.at(column).offset + local; }
  bool operator==(const ConditionalVector&) const = default;
};

enum class SamplingMass {
  LogFrequency,  // proportional to log(1 + count)
  Frequency,     // proportional to count
};

class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(ConditionLayout layout, std::vector<std::vector<std::size_t>> counts);

  const ConditionLayout& layout() const { return layout_; }
  const std::vector<std::size_t>& counts(std::size_t column) const { return counts_.at(column); }
  // Normalized per column.
  const std::vector<double>& log_masses(std::size_t column) const { return log_masses_.at(column); }
  const std::vector<double>& frequencies(std::size_t column) const { return frequencies_.at(column); }
  const std::vector<double>& masses(std::size_t column, SamplingMass mass) const {
    return mass == SamplingMass::LogFrequency ? log_masses(column) : frequencies(column);
  }
  std::size_t columns() const { return counts_.size(); }

 private:
  ConditionLayout layout_;
  std::vector<std::vector<std::size_t>> counts_;
  std::vector<std::vector<double>> log_masses_;
  std::vector<std::vector<double>> frequencies_;
};

FrequencyTable build_frequency_table(const Matrix& encoded, const EncodingLayout& layout);

// Column uniform over columns with observed rows; local index drawn from `mass`.
ConditionalVector sample_condition(const FrequencyTable& freq, Rng& rng,
                                   SamplingMass mass = SamplingMass::LogFrequency);

// Throws InputError when the column's segment is not a hard one-hot.
ConditionalVector condition_of_row(std::span<const double> row, const ConditionLayout& layout, std::size_t column);

// Rows of the encoded matrix grouped by (condition column, local index).
class RowIndex {
 public:
  RowIndex() = default;
  RowIndex(const Matrix& encoded, const ConditionLayout& layout);
  const std::vector<std::size_t>& rows(const ConditionalVector& v) const { return rows_.at(v.column).at(v.local); }

 private:
  std::vector<std::vector<std::vector<std::size_t>>> rows_;
};

// Uniform with replacement over rows matching `v`; throws InputError if none match.
std::vector<std::size_t> draw_real_batch(const ConditionalVector& v, const RowIndex& index, Rng& rng,
                                         std::size_t batch);
std::vector<std::size_t> draw_real_batch(const ConditionalVector& v, const Matrix& encoded,
                                         const ConditionLayout& layout, Rng& rng, std::size_t batch);

// Dense rows, one per condition.
Matrix condition_matrix(std::span<const ConditionalVector> conditions, const ConditionLayout& layout);

nlohmann::json to_json(const FrequencyTable& freq);

}  // namespace tabsynth
