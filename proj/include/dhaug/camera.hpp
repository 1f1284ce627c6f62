#pragma once

#include <array>

#include <Eigen/Core>

#include "dhaug/skeleton.hpp"

namespace dhaug {

using Vec2 = Eigen::Vector2d;

/// Pinhole intrinsics in pixels; `z_min` is the nearest admissible depth in meters.
struct CameraIntrinsics {
  double fx = 1145.0;
  double fy = 1145.0;
  double cx = 512.0;
  double cy = 512.0;
  double z_min = 0.1;

  /// Throws InvalidArgument unless fx, fy, z_min are positive and all finite.
  void check() const;
};

struct Pose2D {
  std::array<Vec2, kKeypointCount> joints;

  Pose2D() { joints.fill(Vec2::Zero()); }
};

/// u = fx x / z + cx, v = fy y / z + cy. Throws DepthViolation naming the
/// first joint with z < z_min.
Pose2D project_pose(const Pose3D& pose, const CameraIntrinsics& camera);

Vec2 project_point(const Vec3& p, const CameraIntrinsics& camera);

CameraIntrinsics default_camera();

}  // namespace dhaug
