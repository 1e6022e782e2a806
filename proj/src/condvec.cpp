#include "tabsynth/condvec.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabsynth/error.h"

namespace tabsynth {

namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (total > 0.0) {
    for (auto& x : v) x /= total;
  }
  return v;
}

// Index of the single 1 in a hard one-hot, or nullopt.
std::optional<std::size_t> hot_index(std::span<const double> seg) {
  std::optional<std::size_t> hot;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] == 1.0) {
      if (hot) return std::nullopt;
      hot = i;
    } else if (seg[i] != 0.0) {
      return std::nullopt;
    }
  }
  return hot;
}

std::size_t draw_from(const std::vector<double>& masses, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] <= 0.0) continue;
    acc += masses[i];
    last = i;
    if (r < acc) return i;
  }
  return last;  // rounding slack lands on the last positive entry
}

}  // namespace

ConditionLayout build_condition_layout(const EncodingLayout& layout) {
  ConditionLayout out;
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    const auto& seg = layout.segments[s];
    if (!seg.conditionable) continue;
    out.columns.push_back({s, seg.offset, out.width, seg.width});
    out.width += seg.width;
  }
  return out;
}

FrequencyTable::FrequencyTable(ConditionLayout layout, std::vector<std::vector<std::size_t>> counts)
    : layout_(std::move(layout)), counts_(std::move(counts)) {
  if (counts_.size() != layout_.columns.size()) throw InputError("frequency table: column count mismatch");
  for (std::size_t c = 0; c < counts_.size(); ++c) {
    if (counts_[c].size() != layout_.columns[c].width) throw InputError("frequency table: width mismatch");
    std::vector<double> logs, raw;
    for (const auto n : counts_[c]) {
      logs.push_back(std::log1p(static_cast<double>(n)));
      raw.push_back(static_cast<double>(n));
    }
    log_masses_.push_back(normalized(std::move(logs)));
    frequencies_.push_back(normalized(std::move(raw)));
  }
}

FrequencyTable build_frequency_table(const Matrix& encoded, const EncodingLayout& layout) {
  if (static_cast<std::size_t>(encoded.cols()) != layout.width) {
    throw InputError("encoded matrix width does not match the layout");
  }
  auto cond = build_condition_layout(layout);
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& col : cond.columns) {
    std::vector<std::size_t> n(col.width, 0);
    for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
      const double* row = encoded.row(r).data();
      const auto hot = hot_index({row + col.source_offset, col.width});
      if (!hot) throw InputError("encoded row " + std::to_string(r) + " has a non-one-hot segment");
      ++n[*hot];
    }
    counts.push_back(std::move(n));
  }
  return FrequencyTable(std::move(cond), std::move(counts));
}

ConditionalVector sample_condition(const FrequencyTable& freq, Rng& rng, SamplingMass mass) {
  // Columns with no observed rows are skipped so every condition is satisfiable.
  std::vector<std::size_t> live;
  for (std::size_t c = 0; c < freq.columns(); ++c) {
    const auto& n = freq.counts(c);
    if (std::any_of(n.begin(), n.end(), [](std::size_t k) { return k > 0; })) live.push_back(c);
  }
  if (live.empty()) throw InputError("no conditionable column has observed rows");
  std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
  const std::size_t column = live[pick(rng)];
  return {column, draw_from(freq.masses(column, mass), rng)};
}

ConditionalVector condition_of_row(std::span<const double> row, const ConditionLayout& layout, std::size_t column) {
  const auto& col = layout.columns.at(column);
  if (col.source_offset + col.width > row.size()) throw InputError("row is narrower than the layout");
  const auto hot = hot_index(row.subspan(col.source_offset, col.width));
  if (!hot) throw InputError("conditioned segment is not a hard one-hot");
  return {column, *hot};
}

RowIndex::RowIndex(const Matrix& encoded, const ConditionLayout& layout) {
  for (std::size_t c = 0; c < layout.columns.size(); ++c) {
    std::vector<std::vector<std::size_t>> groups(layout.columns[c].width);
    for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
      const auto v = condition_of_row({encoded.row(r).data(), static_cast<std::size_t>(encoded.cols())}, layout, c);
      groups[v.local].push_back(static_cast<std::size_t>(r));
    }
    rows_.push_back(std::move(groups));
  }
}

std::vector<std::size_t> draw_real_batch(const ConditionalVector& v, const RowIndex& index, Rng& rng,
                                         std::size_t batch) {
  const auto& pool = index.rows(v);
  if (pool.empty()) throw InputError("no real row satisfies the condition");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> out(batch);
  for (auto& r : out) r = pool[pick(rng)];
  return out;
}

std::vector<std::size_t> draw_real_batch(const ConditionalVector& v, const Matrix& encoded,
                                         const ConditionLayout& layout, Rng& rng, std::size_t batch) {
  return draw_real_batch(v, RowIndex(encoded, layout), rng, batch);
}

Matrix condition_matrix(std::span<const ConditionalVector> conditions, const ConditionLayout& layout) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(conditions.size()), static_cast<Eigen::Index>(layout.width));
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(conditions[i].bit(layout))) = 1.0;
  }
  return out;
}

nlohmann::json to_json(const FrequencyTable& freq) {
  auto cols = nlohmann::json::array();
  for (std::size_t c = 0; c < freq.columns(); ++c) {
    const auto& col = freq.layout().columns[c];
    cols.push_back({{"segment", col.segment},
                    {"offset", col.offset},
                    {"counts", freq.counts(c)},
                    {"log_masses", freq.log_masses(c)},
                    {"frequencies", freq.frequencies(c)}});
  }
  return {{"width", freq.layout().width}, {"columns", cols}};
}

}  // namespace tabsynth
