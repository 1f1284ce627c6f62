#include "dhaug/errors.hpp"

namespace dhaug {

DepthViolation::DepthViolation(int joint, double depth, double z_min)
    : std::runtime_error("joint " + std::to_string(joint) + " has depth " + std::to_string(depth) +
                         " m, below the minimum " + std::to_string(z_min) + " m"),
      joint_(joint),
      depth_(depth) {}

DegenerateBone::DegenerateBone(int bone, double length)
    : std::runtime_error("bone " + std::to_string(bone) + " is degenerate (length " +
                         std::to_string(length) + " m)"),
      bone_(bone) {}

ShapeError::ShapeError(const std::string& what, long rows_a, long cols_a, long rows_b,
                       long cols_b)
    : std::invalid_argument(what + ": shape [" + std::to_string(rows_a) + ", " +
                            std::to_string(cols_a) + "] vs [" + std::to_string(rows_b) + ", " +
                            std::to_string(cols_b) + "]") {}

ParseError::ParseError(const std::string& path, long line, const std::string& what)
    : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         what),
      line_(line) {}

}  // namespace dhaug
