#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tabsynth {

struct GaussianMode {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 1.0;
};

// One-dimensional Gaussian mixture. Modes are sorted by mean and their weights sum to 1.
struct GaussianMixtureModel {
  std::vector<GaussianMode> modes;
  // Indices of the retained components among the initial max_modes, aligned with `modes`.
  std::vector<std::size_t> retained;

  std::size_t size() const { return modes.size(); }
  bool empty() const { return modes.empty(); }
};

struct VgmOptions {
  std::size_t max_modes = 10;
  // Dirichlet concentration of the weight prior; <= 0 means 1 / max_modes.
  double weight_concentration = 0.0;
  double weight_threshold = 0.005;
  std::size_t max_iterations = 100;
  double tolerance = 1e-5;
  double sigma_floor_ratio = 1e-4;
  std::uint64_t seed = 0;
};

struct VgmTrace {
  std::vector<double> lower_bound;  // evidence lower bound after each iteration
  std::size_t iterations = 0;
  bool converged = false;
};

// Variational Bayesian mixture fit. Components below the weight threshold are pruned and
// the rest renormalized. A constant column yields a single mode at that value.
GaussianMixtureModel fit_vgm(std::span<const double> values, const VgmOptions& options = {},
                             VgmTrace* trace = nullptr);

double normal_density(double x, double mean, double stddev);

}  // namespace tabsynth
