#pragma once

#include <stdexcept>
#include <string>

namespace boxreach {

/// Malformed or missing configuration. `path` names the offending field
/// (e.g. "boxes[2].min").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what),
        path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Non-finite values reached an optimizer or loss.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sampling from empty memories or training on an empty dataset.
class NoDataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The trajectory generator could not produce enough verified samples.
class GenerationFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint unreadable, corrupt, or incompatible with the scene.
class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace boxreach
