#pragma once

#include <stdexcept>
#include <string>

namespace snn {

// Error taxonomy mirrored by the CLI exit codes: validation -> 2,
// io -> 3, numerical -> 4.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace snn
