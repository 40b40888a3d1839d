#ifndef DKD_ERRORS_HPP
#define DKD_ERRORS_HPP

#include <stdexcept>
#include <string>

// Error categories the CLI maps to distinct exit codes. Precondition
// violations inside numeric kernels use std::invalid_argument /
// std::domain_error directly.

namespace dkd {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dkd

#endif
