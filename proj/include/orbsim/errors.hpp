#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace orbsim {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown catalog system name.
class CatalogError : public Error {
 public:
  using Error::Error;
};

// Invalid parameter keys, mismatched dimensions between systems, malformed
// experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Trajectory/matrix shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Singular Gram matrix in the unregularized normal equations.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

// Unreadable or unwritable artifact file; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// A state component left the finite range during integration.
class OverflowError : public Error {
 public:
  OverflowError(std::size_t step, const std::string& what)
      : Error("overflow at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace orbsim
