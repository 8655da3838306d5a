#pragma once

#include <stdexcept>
#include <string>

namespace grad {

/// Broad failure classes; the CLI maps these onto process exit codes.
enum class ErrorKind {
  kShape,
  kNumeric,
  kArgument,
  kParse,
  kConfig,
  kData,
  kMetric,
  kTraining,
  kSampling,
  kGeneration,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kShape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::kArgument, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(ErrorKind::kParse, file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ErrorKind::kMetric, what) {}
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& stage, std::size_t step, const std::string& what)
      : Error(ErrorKind::kTraining, stage + " step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class SamplingError : public Error {
 public:
  SamplingError(std::size_t step, const std::string& what)
      : Error(ErrorKind::kSampling, "sampling step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error(ErrorKind::kGeneration, what) {}
};

}  // namespace grad
