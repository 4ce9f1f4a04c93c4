#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdfp {

enum class ErrorKind {
  kDimension,
  kIndex,
  kUsage,
  kConfig,
  kCapacity,
  kFormat,
  kNumeric,
  kIngestion,
  kTraining,
  kBench,
  kIo,
};

const char* to_string(ErrorKind kind);

// Base of every error the library throws. `kind()` is stable and is what the
// CLI prints as the machine-readable part of its one-line error.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define SDFP_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

SDFP_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
SDFP_DEFINE_ERROR(IndexError, ErrorKind::kIndex)
SDFP_DEFINE_ERROR(UsageError, ErrorKind::kUsage)
SDFP_DEFINE_ERROR(CapacityError, ErrorKind::kCapacity)
SDFP_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)
SDFP_DEFINE_ERROR(IngestionError, ErrorKind::kIngestion)
SDFP_DEFINE_ERROR(BenchError, ErrorKind::kBench)
SDFP_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef SDFP_DEFINE_ERROR

// Names the offending field so callers (and the CLI) can report it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(ErrorKind::kConfig, field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& message)
      : Error(ErrorKind::kFormat,
              message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class TrainingError : public Error {
 public:
  TrainingError(long step, const std::string& message)
      : Error(ErrorKind::kTraining,
              "step " + std::to_string(step) + ": " + message),
        step_(step) {}

  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace sdfp
