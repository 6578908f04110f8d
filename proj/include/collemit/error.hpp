#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace collemit {

/// Raised for malformed user input (cloud specs, pulses, configs).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a solver fails or produces non-finite values. Carries the
/// realization seed, when known, so the failing cloud can be replayed.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::uint64_t> seed = std::nullopt)
      : std::runtime_error(seed ? what + " (realization seed " +
                                      std::to_string(*seed) + ")"
                                : what),
        seed_(seed) {}

  std::optional<std::uint64_t> seed() const { return seed_; }

 private:
  std::optional<std::uint64_t> seed_;
};

}  // namespace collemit
