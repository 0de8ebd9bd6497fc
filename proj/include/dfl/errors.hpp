#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dfl {

/// Exit-code groups used by the CLI. Library code throws typed errors;
/// the CLI maps them to process exit codes.
enum class ErrorCode : int {
  Ok = 0,
  ConfigOrData = 2,
  OracleTie = 3,
  NumericalDivergence = 4,
  TargetUnreachable = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what)
      : Error(ErrorCode::ConfigOrData, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what)
      : Error(ErrorCode::ConfigOrData, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what)
      : Error(ErrorCode::ConfigOrData, what) {}
};

struct NonFiniteError : Error {
  explicit NonFiniteError(const std::string& what)
      : Error(ErrorCode::NumericalDivergence, what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what)
      : Error(ErrorCode::NumericalDivergence, what) {}
};

struct MissingGradientError : Error {
  explicit MissingGradientError(const std::string& what)
      : Error(ErrorCode::ConfigOrData, what) {}
};

struct FrozenViolationError : Error {
  explicit FrozenViolationError(const std::string& what)
      : Error(ErrorCode::ConfigOrData, what) {}
};

struct DegenerateLossError : Error {
  explicit DegenerateLossError(const std::string& what)
      : Error(ErrorCode::NumericalDivergence, what) {}
};

/// |beta| tie at the floor(tau) budget boundary; carries the tied indices.
struct TieError : Error {
  TieError(const std::string& what, std::vector<std::size_t> indices)
      : Error(ErrorCode::OracleTie, what), tied_indices(std::move(indices)) {}
  std::vector<std::size_t> tied_indices;
};

}  // namespace dfl
