#pragma once

#include "dhaug/autodiff.hpp"
#include "dhaug/camera.hpp"
#include "dhaug/features.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug {

// Batched poses are stored one per row, joint-major: x0 y0 z0 x1 ...

void pose_to_row(const Pose3D& pose, double* row);
Pose3D pose_from_row(const double* row);
void pose2d_to_row(const Pose2D& pose, double* row);
Pose2D pose2d_from_row(const double* row);

/// Forward kinematics on N x 48 parameter deltas and N x 6 global values;
/// returns N x 48 camera-space coordinates.
ad::Var fk_op(const SkeletonTopology& topology, ad::Var params, ad::Var globals);

/// Pinhole projection of N x 48 poses to N x 32. With `normalized` the output
/// is ((u - cx) / fx, (v - cy) / fy), otherwise pixels. Throws DepthViolation.
ad::Var project_op(ad::Var poses, const CameraIntrinsics& camera, bool normalized);

/// Adjacent-bone cosines of N x 48 poses, N x pairs.
ad::Var cosine_op(ad::Var poses, const AdjacentBonePairs& pairs);

}  // namespace dhaug
