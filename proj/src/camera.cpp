#include "dhaug/camera.hpp"

#include <cmath>

#include "dhaug/errors.hpp"

namespace dhaug {

void CameraIntrinsics::check() const {
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy) ||
      !std::isfinite(z_min) || fx <= 0.0 || fy <= 0.0 || z_min <= 0.0) {
    throw InvalidArgument("camera needs finite intrinsics with fx, fy, z_min > 0");
  }
}

Vec2 project_point(const Vec3& p, const CameraIntrinsics& camera) {
  return {camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy};
}

Pose2D project_pose(const Pose3D& pose, const CameraIntrinsics& camera) {
  camera.check();
  Pose2D out;
  for (int j = 0; j < kKeypointCount; ++j) {
    const Vec3& p = pose.joints[j];
    if (!p.allFinite()) throw InvalidArgument("project_pose: non-finite joint " + std::to_string(j));
    if (p.z() < camera.z_min) throw DepthViolation(j, p.z(), camera.z_min);
    out.joints[j] = project_point(p, camera);
  }
  return out;
}

CameraIntrinsics default_camera() { return CameraIntrinsics{}; }

}  // namespace dhaug
