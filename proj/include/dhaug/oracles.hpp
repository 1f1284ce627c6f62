#pragma once

// Straightforward reference implementations used to cross-check the
// optimized code paths. Nothing here is used by the library itself.

#include <functional>
#include <vector>

#include "dhaug/autodiff.hpp"
#include "dhaug/camera.hpp"
#include "dhaug/features.hpp"
#include "dhaug/nn.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug::oracle {

/// Elementary-transform product RotX * TransX * RotZ * TransZ, written out
/// entry by entry.
Mat4 dh_matrix(double a, double d, double alpha, double theta);

/// Every branch composed on its own with plain loops; the first branch that
/// reaches a keypoint wins.
Pose3D forward_kinematics(const SkeletonTopology& topology, const ParamVector& params, const GlobalTransform& g);

Vec2 project(const Vec3& p, double fx, double fy, double cx, double cy);

/// Cosine from the law of cosines instead of a dot product.
double bone_cosine(const Vec3& prev, const Vec3& cur);

/// Brute-force double sums of consecutive differences.
Vec3 traj_3d_sum(const std::vector<Pose3D>& seq);
double angle_traj_sum(const std::vector<std::vector<double>>& cosines);
Vec2 root_2d_sum(const std::vector<Pose2D>& seq, int root);

/// Triple loop matrix product and activations.
ad::Tensor mlp_forward(const nn::Mlp& net, const ad::Tensor& x);

/// Central differences of a scalar function.
ad::Tensor numeric_gradient(const std::function<double(const ad::Tensor&)>& f, const ad::Tensor& x,
                            double step = 1e-5);

/// Normwise relative error max|a - b| / max|b|.
double relative_error(const ad::Tensor& a, const ad::Tensor& b);

}  // namespace dhaug::oracle
