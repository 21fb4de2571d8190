#ifndef REACHLAB_ERRORS_HPP_
#define REACHLAB_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace reachlab {

// Base class for every error raised by the library. `kind()` is a short
// machine-readable tag used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class BoundViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "bound_violation"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape_mismatch"; }
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_finite"; }
};

class UnsupportedVariant : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported_variant"; }
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_convergence"; }
};

// Raised with every offending field at once, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> fields)
      : Error(join(fields)), fields_(std::move(fields)) {}
  const char* kind() const noexcept override { return "config"; }
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  static std::string join(const std::vector<std::string>& fields) {
    std::string out = "invalid configuration:";
    for (const auto& f : fields) out += "\n  " + f;
    return out;
  }
  std::vector<std::string> fields_;
};

}  // namespace reachlab

#endif  // REACHLAB_ERRORS_HPP_
