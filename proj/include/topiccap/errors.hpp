#pragma once

#include <stdexcept>
#include <string>

namespace topiccap {

// Incompatible tensor shapes or out-of-range indices.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// An operation produced NaN/Inf, or training diverged.
struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// File-format and filesystem failures. `kind` distinguishes the failure
// class so callers can report it without parsing the message.
struct IoError : std::runtime_error {
  enum class Kind { MalformedManifest, ShapeMismatch, MissingFile, WriteFailed };
  IoError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

// Invalid or cross-inconsistent run configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace topiccap
