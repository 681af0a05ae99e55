#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flowmat {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or sizes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Iterative solver stopped before reaching tolerance. Carries the last iterate
// (interleaved re/im) and the residual it reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> iterate,
                   double residual)
      : Error(what), iterate_(std::move(iterate)), residual_(residual) {}

  const std::vector<double>& iterate() const noexcept { return iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  std::vector<double> iterate_;
  double residual_;
};

// Malformed file or wire payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training loss blew up; raised by the divergence guard.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowmat
