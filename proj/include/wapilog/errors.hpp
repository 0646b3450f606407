#pragma once

#include <stdexcept>
#include <string>

namespace wapilog {

/// Invalid user-supplied configuration: format strings, rule files,
/// sessionizer settings, workload specs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure reading or writing a stream or file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An entry cannot be rendered under the requested format.
class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sessionization result and ground truth do not describe the same corpus.
class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wapilog
