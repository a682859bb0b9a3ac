#pragma once

#include <stdexcept>
#include <string>

namespace demma {

// Process exit status associated with each error family (used by the CLI).
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error("domain error: " + what, ExitCode::kNumerical) {}
};

class InvalidParameterization : public Error {
 public:
  explicit InvalidParameterization(const std::string& what)
      : Error("invalid parameterization: " + what, ExitCode::kNumerical) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error("insufficient data: " + what, ExitCode::kData) {}
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what)
      : Error("convergence failure: " + what, ExitCode::kNumerical) {}
};

class InconsistentComponentsError : public Error {
 public:
  explicit InconsistentComponentsError(const std::string& what)
      : Error("inconsistent mixture components: " + what, ExitCode::kData) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error("shape mismatch: " + what, ExitCode::kData) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("configuration error: " + what, ExitCode::kUsage) {}
};

class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& what)
      : Error("ingestion error: " + what, ExitCode::kData) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error("divergence: " + what, ExitCode::kNumerical) {}
};

}  // namespace demma
