#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tabsynth/matrix.h"
#include "tabsynth/schema.h"
#include "tabsynth/table.h"

namespace tabsynth {

// Base-2 Jensen-Shannon divergence of two distributions over the same support.
double jsd(std::span<const double> p, std::span<const double> q);

// Category frequencies of two columns over the union of observed tokens (missing
// cells count as their own category), in sorted token order.
struct AlignedFrequencies {
  std::vector<std::string> categories;
  std::vector<double> real;
  std::vector<double> synthetic;
};
AlignedFrequencies aligned_frequencies(const Column& real, const Column& synthetic);

// Exact first Wasserstein distance between the empirical distributions of a and b.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

double pearson(std::span<const double> x, std::span<const double> y);
// Uncertainty coefficient U(x | y) = (H(x) - H(x | y)) / H(x); 1 when H(x) = 0.
double theils_u(std::span<const std::string> x, std::span<const std::string> y);
// eta of `values` grouped by `categories`.
double correlation_ratio(std::span<const std::string> categories, std::span<const double> values);

// entry(i, j): Pearson for numeric pairs (symmetric), U(i | j) for categorical pairs,
// eta for mixed-kind pairs (symmetric). Mixed columns count as numeric.
struct AssociationMatrix {
  std::vector<std::string> columns;
  std::vector<bool> categorical;
  Matrix values;
  std::vector<std::string> warnings;
};
AssociationMatrix association_matrix(const Table& table, const Schema& schema);

// Euclidean norm of differences over i < j, plus (j, i) for categorical pairs.
double diff_corr(const AssociationMatrix& real, const AssociationMatrix& synthetic);

struct SimilarityReport {
  std::map<std::string, double> jsd;        // categorical columns
  std::map<std::string, double> wd;         // numeric columns, raw units
  std::map<std::string, double> wd_scaled;  // divided by the real column's range
  double avg_jsd = 0.0;
  double avg_wd = 0.0;
  double avg_wd_scaled = 0.0;
  double diff_corr = 0.0;
  AssociationMatrix real_association;
  AssociationMatrix synthetic_association;
};

SimilarityReport similarity(const Table& real, const Table& synthetic, const Schema& schema);

}  // namespace tabsynth
