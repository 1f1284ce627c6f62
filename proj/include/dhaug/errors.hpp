#pragma once

#include <stdexcept>
#include <string>

namespace dhaug {

/// Bad input to an operation: non-finite values, wrong lengths, broken
/// topology tables.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A joint lies closer to the camera than the admissible minimum depth.
class DepthViolation : public std::runtime_error {
 public:
  DepthViolation(int joint, double depth, double z_min);
  int joint() const noexcept { return joint_; }
  double depth() const noexcept { return depth_; }

 private:
  int joint_;
  double depth_;
};

/// A bone too short to define a direction.
class DegenerateBone : public std::runtime_error {
 public:
  DegenerateBone(int bone, double length);
  int bone() const noexcept { return bone_; }

 private:
  int bone_;
};

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& what, long rows_a, long cols_a, long rows_b, long cols_b);
};

/// Malformed data file. `line()` is 1-based; 0 when not line-oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, long line, const std::string& what);
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Non-finite loss during training; the message carries a metrics snapshot.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dhaug
