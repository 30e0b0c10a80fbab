#pragma once

#include <stdexcept>
#include <string>

namespace mmkd {

/// Invalid or out-of-contract configuration. Mapped to CLI exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite loss or other numerical breakdown. Mapped to CLI exit code 2.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller broke a precondition (shape mismatch, bad call order).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace mmkd
