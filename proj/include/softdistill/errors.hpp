// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace softdistill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph: non-scalar loss, no recording scope, mixed graphs.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, malformed, or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss or distilled quantity became NaN/Inf during distillation.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t step, std::size_t epoch, std::size_t inner)
      : Error(what + " (step " + std::to_string(step) + ", epoch " + std::to_string(epoch) +
              ", inner " + std::to_string(inner) + ")"),
        step_(step),
        epoch_(epoch),
        inner_(inner) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t inner() const noexcept { return inner_; }

 private:
  std::size_t step_;
  std::size_t epoch_;
  std::size_t inner_;
};

}  // namespace softdistill
