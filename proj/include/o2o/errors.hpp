#pragma once

#include <stdexcept>
#include <string>

namespace o2o {

// Base for every error raised by the library. `category()` is stable and
// machine-readable; the CLI maps it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

// Raised when an operation is called out of order (e.g. backward with no
// recorded forward pass).
struct StateError : Error {
  explicit StateError(const std::string& what) : Error("state", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error("data", what) {}
};

// NaN/Inf detected; training must abort rather than propagate garbage.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace o2o
