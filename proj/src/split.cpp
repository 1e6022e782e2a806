#include "tabsynth/split.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "tabsynth/error.h"

namespace tabsynth {

TrainTestSplit stratified_split(const Table& table, const TargetSpec& target, double test_fraction,
                                std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must lie in (0, 1)");

  std::map<std::string, std::vector<std::size_t>> groups;
  if (target.kind == ProblemKind::None) {
    auto& all = groups[""];
    all.resize(table.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
  } else {
    const auto& column = table.column(target.column);
    for (std::size_t r = 0; r < column.size(); ++r) groups[column.cells()[r].value_or("")].push_back(r);
    for (const auto& [label, rows] : groups) {
      if (rows.size() < 2) throw InputError("target class '" + label + "' has fewer than 2 rows");
    }
  }

  const auto total_test = static_cast<std::size_t>(std::llround(static_cast<double>(table.rows()) * test_fraction));

  struct Quota {
    std::size_t count;
    double remainder;
    std::size_t order;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, rows] : groups) {
    const double exact = static_cast<double>(rows.size()) * test_fraction;
    const double floor = std::floor(exact);
    quotas.push_back({static_cast<std::size_t>(floor), exact - floor, quotas.size()});
    assigned += quotas.back().count;
  }
  std::vector<std::size_t> by_remainder(quotas.size());
  std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (std::size_t i = 0; assigned < total_test && i < by_remainder.size(); ++i, ++assigned) {
    ++quotas[by_remainder[i]].count;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_rows, test_rows;
  std::size_t g = 0;
  for (auto& [label, rows] : groups) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t k = quotas[g++].count;
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {table.select_rows(train_rows), table.select_rows(test_rows)};
}

}  // namespace tabsynth
