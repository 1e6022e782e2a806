#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tabsynth/matrix.h"
#include "tabsynth/schema.h"
#include "tabsynth/table.h"

namespace tabsynth {

// Rows for distance computations: numeric columns min-max scaled into [0, 1] by the
// given bounds (plus a missing indicator when either table has missing cells);
// categorical columns one-hot, each block scaled by 1/sqrt(2) so a category flip
// costs distance 1.
class DistanceSpace {
 public:
  // Bounds and categories from the union of the given tables.
  DistanceSpace(const Schema& schema, std::span<const Table* const> tables);
  Matrix embed(const Table& table) const;
  std::size_t width() const { return width_; }

 private:
  struct Part {
    std::string column;
    bool categorical = false;
    double lower = 0.0, upper = 1.0;
    bool missing_indicator = false;
    std::vector<std::string> categories;  // sorted; "" holds missing
    std::size_t offset = 0;
  };
  std::vector<Part> parts_;
  std::size_t width_ = 0;
};

// 5th-percentile style quantile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

// For each query row, the Euclidean distances to its nearest and second-nearest
// reference rows. With `exclude_self`, query i skips reference i (same set).
struct NeighbourDistances {
  std::vector<double> first;
  std::vector<double> second;
};
NeighbourDistances nearest_neighbours(const Matrix& query, const Matrix& reference, bool exclude_self);

// d1 / d2 per query; 1 when d2 = 0.
std::vector<double> distance_ratios(const NeighbourDistances& d);

struct PrivacyReport {
  double dcr_real_synthetic = 0.0;
  double dcr_real = 0.0;
  double dcr_synthetic = 0.0;
  double nndr_real_synthetic = 0.0;
  double nndr_real = 0.0;
  double nndr_synthetic = 0.0;
  std::size_t real_rows = 0;
  std::size_t synthetic_rows = 0;
};

struct PrivacyOptions {
  double percentile = 5.0;
  // Deterministic row subsample per table above this size; 0 keeps all rows.
  std::size_t max_rows = 0;
  std::uint64_t seed = 0;
};

// Real-to-synthetic queries are synthetic rows against real references. Within-real
// distances use real-only scaling bounds, so they do not depend on the synthetic set.
PrivacyReport privacy(const Table& real, const Table& synthetic, const Schema& schema,
                      const PrivacyOptions& options = {});

}  // namespace tabsynth
