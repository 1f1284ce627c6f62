#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhaug/camera.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug {

using PoseSequence3D = std::vector<Pose3D>;
using PoseSequence2D = std::vector<Pose2D>;

/// Bone pairs (parent bone, child bone) meeting at a keypoint.
struct AdjacentBonePairs {
  std::vector<Bone> bones;
  std::vector<std::pair<int, int>> pairs;

  std::size_t size() const { return pairs.size(); }
};

/// Every parent-child bone pair of the tree: bone j follows bone i when j
/// starts at the keypoint where i ends.
AdjacentBonePairs adjacent_bone_pairs(std::span<const Bone> bones);
AdjacentBonePairs adjacent_bone_pairs(const SkeletonTopology& topology);

inline constexpr double kMinBoneLength = 1e-9;

/// (V_i . V_{i-1}) / (L_i L_{i-1}) per pair, clamped into [-1, 1].
/// Throws DegenerateBone for bones shorter than kMinBoneLength.
std::vector<double> joint_cosines(const Pose3D& pose, const AdjacentBonePairs& pairs);

struct Trajectory3D {
  std::vector<std::array<Vec3, kKeypointCount>> diffs;  // T-1 entries
  Vec3 sum = Vec3::Zero();
};
Trajectory3D traj_3d(std::span<const Pose3D> seq);

struct AngleTrajectory {
  std::vector<std::vector<double>> diffs;  // T-1 rows of pair deltas
  double sum = 0.0;
};
AngleTrajectory bone_rotation_traj(std::span<const Pose3D> seq, const AdjacentBonePairs& pairs);

struct RootTrajectory2D {
  std::vector<Vec2> diffs;
  Vec2 sum = Vec2::Zero();
};
RootTrajectory2D root_traj_2d(std::span<const Pose2D> seq, int root_id);

/// Everything the critics consume from one sequence, plus the summed
/// trajectory scalars kept as diagnostics.
struct FeatureBundle {
  std::vector<std::vector<double>> cosines;  // T rows
  Trajectory3D traj3d;
  AngleTrajectory angle;
  RootTrajectory2D root2d;
};

FeatureBundle compute_features(std::span<const Pose3D> seq3d, std::span<const Pose2D> seq2d,
                               const AdjacentBonePairs& pairs, int root_id);

std::string feature_bundle_to_json(const FeatureBundle& bundle);

}  // namespace dhaug
