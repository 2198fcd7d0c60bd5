#pragma once

#include <stdexcept>
#include <string>

namespace fpnseg {

// Every error thrown by the library carries a short machine-readable class
// ("shape_error", "config_error", ...) that the CLI prints as a line prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& what) : Error("value_error", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error("data_error", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& what)
      : Error("checkpoint_error", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what)
      : Error("training_error", what) {}
};

}  // namespace fpnseg
