#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mono3dt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// geometry
class PointBehindCamera : public Error {
 public:
  PointBehindCamera() : Error("point is behind the camera") {}
};

class BoxBehindCamera : public Error {
 public:
  BoxBehindCamera() : Error("all box corners are behind the camera") {}
};

class NonPositiveDepth : public Error {
 public:
  NonPositiveDepth() : Error("depth must be positive") {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// association / metrics
class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("feature length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error(what + ": empty input") {}
};

class DegenerateBox : public Error {
 public:
  DegenerateBox() : Error("box has zero width or height") {}
};

// motion
class SingularInnovation : public Error {
 public:
  SingularInnovation() : Error("innovation covariance is not invertible") {}
};

class DivergedTraining : public Error {
 public:
  explicit DivergedTraining(std::size_t step)
      : Error("training loss became non-finite at step " + std::to_string(step)) {}
};

// io
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FrameGapError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class FormatVersionError : public Error {
 public:
  using Error::Error;
};

class UnknownKey : public Error {
 public:
  explicit UnknownKey(const std::string& key) : Error("unknown config key '" + key + "'") {}
};

class OutOfRangeValue : public Error {
 public:
  using Error::Error;
};

}  // namespace mono3dt
