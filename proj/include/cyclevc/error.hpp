#pragma once

#include <stdexcept>
#include <string>

namespace cyclevc {

// Base for every error the library raises. Callers that only care about
// "something failed" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/matrix shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Arguments or data that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Waveform could not be analyzed (too short, not finite, ...).
class AnalysisError : public Error {
 public:
  using Error::Error;
};

// Requested vocoder backend is unavailable in this build.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or corrupted file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss or parameter).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cyclevc
