#pragma once

#include <stdexcept>
#include <string>

namespace layerforge {

// Raster dimensions, channel counts or divisibility constraints violated.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value outside the documented domain (range, level set, enum tag).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stored data failed a hash or recomposition check on load.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or was asked to run without data.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An external or built-in adapter failed; the message names the adapter.
struct AdapterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inference requested from weights that were never fitted or trained.
struct UntrainedError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace layerforge
