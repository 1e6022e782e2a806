#pragma once

#include <stdexcept>
#include <string>

namespace tabsynth {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data, unknown names, violated preconditions on user input.
class InputError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity surfaced inside numeric code.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training aborted (divergence guard or invalid training state).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabsynth
