#pragma once

#include <stdexcept>
#include <string>

namespace thermocast {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments (not shapes) was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable. `stage()` names the pipeline step that rejected it.
class DataError : public Error {
 public:
  DataError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// A serialized artifact is malformed, truncated or incompatible.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace thermocast
