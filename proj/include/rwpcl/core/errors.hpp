#pragma once

#include <stdexcept>
#include <string>

namespace rwpcl {

// Every error carries a stable short code; the CLI maps it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

// Violated pre/post-condition of an API (calling backward twice, b=1 batch norm, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

// Bad data: label out of range, token id past the vocabulary, malformed file row.
struct InputError : Error {
  explicit InputError(const std::string& what) : Error("input", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

// Non-finite loss or similar divergence inside a training trial.
struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace rwpcl
