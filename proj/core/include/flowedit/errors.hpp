#pragma once

#include <stdexcept>

namespace flowedit {

// Unreadable/unwritable files, malformed or unsupported file contents.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (inconsistent modes, weights, architecture headers).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A guidance scorer could not produce a score.
class GuidanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The sidecar could not be reached or violated the wire protocol.
class TransportError : public GuidanceError {
 public:
  using GuidanceError::GuidanceError;
};

}  // namespace flowedit
