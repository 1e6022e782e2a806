#pragma once

namespace tabsynth {

// Logarithmic compression for long-tailed columns. `lower` is the column's
// training minimum l; `epsilon` only matters when l <= 0.
struct LongTailParams {
  double lower = 0.0;
  double epsilon = 1.0;
};

double log_compress(double value, const LongTailParams& params);
double log_expand(double compressed, const LongTailParams& params);

}  // namespace tabsynth
