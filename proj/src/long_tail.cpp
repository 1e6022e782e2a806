#include "tabsynth/long_tail.h"

#include <cmath>
#include <string>

#include "tabsynth/error.h"

namespace tabsynth {

double log_compress(double value, const LongTailParams& params) {
  if (!(params.epsilon > 0.0)) throw InputError("long-tail epsilon must be positive");
  if (params.lower > 0.0) {
    if (!(value > 0.0)) throw InputError("log_compress: value " + std::to_string(value) + " outside domain (l > 0)");
    return std::log(value);
  }
  const double shifted = value - params.lower + params.epsilon;
  if (!(shifted > 0.0)) throw InputError("log_compress: value " + std::to_string(value) + " below lower bound");
  return std::log(shifted);
}

double log_expand(double compressed, const LongTailParams& params) {
  if (params.lower > 0.0) return std::exp(compressed);
  return std::exp(compressed) + params.lower - params.epsilon;
}

}  // namespace tabsynth
