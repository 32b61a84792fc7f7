#pragma once

#include <stdexcept>
#include <string>

namespace ddsim {

// Invalid user input: bad config values, inconsistent sequence data,
// out-of-range parameters. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure at runtime: eigensolver non-convergence, norm drift,
// singular Newton systems. CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ddsim
