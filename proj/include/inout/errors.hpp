#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace inout {

// Root of every error the toolkit raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class MaskGenerationError : public Error {
 public:
  MaskGenerationError(const std::string& what, double last_coverage)
      : Error(what), last_coverage_(last_coverage) {}
  double last_coverage() const { return last_coverage_; }

 private:
  double last_coverage_;
};

class MergeError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// A run-level failure tagged with the stage and seed that raised it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, std::uint64_t seed, const std::string& cause)
      : Error("stage '" + stage + "' failed for seed " + std::to_string(seed) + ": " + cause), stage_(stage), seed_(seed) {}
  const std::string& stage() const { return stage_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::string stage_;
  std::uint64_t seed_;
};

}  // namespace inout
