#include "dhaug/features.hpp"

#include <algorithm>

#include "dhaug/errors.hpp"
#include "json.hpp"

namespace dhaug {

AdjacentBonePairs adjacent_bone_pairs(std::span<const Bone> bones) {
  AdjacentBonePairs out;
  out.bones.assign(bones.begin(), bones.end());
  for (int i = 0; i < static_cast<int>(bones.size()); ++i) {
    for (int j = 0; j < static_cast<int>(bones.size()); ++j) {
      if (bones[j].parent == bones[i].child) out.pairs.emplace_back(i, j);
    }
  }
  return out;
}

AdjacentBonePairs adjacent_bone_pairs(const SkeletonTopology& topology) {
  return adjacent_bone_pairs(topology.bones());
}

std::vector<double> joint_cosines(const Pose3D& pose, const AdjacentBonePairs& pairs) {
  std::vector<Vec3> vec(pairs.bones.size());
  std::vector<double> len(pairs.bones.size());
  for (std::size_t b = 0; b < pairs.bones.size(); ++b) {
    vec[b] = pose.joints[pairs.bones[b].child] - pose.joints[pairs.bones[b].parent];
    len[b] = vec[b].norm();
    if (!(len[b] >= kMinBoneLength)) throw DegenerateBone(static_cast<int>(b), len[b]);
  }
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [prev, cur] : pairs.pairs) {
    const double c = vec[cur].dot(vec[prev]) / (len[cur] * len[prev]);
    out.push_back(std::clamp(c, -1.0, 1.0));
  }
  return out;
}

Trajectory3D traj_3d(std::span<const Pose3D> seq) {
  Trajectory3D out;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    std::array<Vec3, kKeypointCount> d;
    for (int i = 0; i < kKeypointCount; ++i) {
      d[i] = seq[t].joints[i] - seq[t - 1].joints[i];
      out.sum += d[i];
    }
    out.diffs.push_back(d);
  }
  return out;
}

AngleTrajectory bone_rotation_traj(std::span<const Pose3D> seq, const AdjacentBonePairs& pairs) {
  AngleTrajectory out;
  std::vector<double> prev;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    std::vector<double> cur = joint_cosines(seq[t], pairs);
    if (t > 0) {
      std::vector<double> d(cur.size());
      for (std::size_t i = 0; i < cur.size(); ++i) {
        d[i] = cur[i] - prev[i];
        out.sum += d[i];
      }
      out.diffs.push_back(std::move(d));
    }
    prev = std::move(cur);
  }
  return out;
}

RootTrajectory2D root_traj_2d(std::span<const Pose2D> seq, int root_id) {
  if (root_id < 0 || root_id >= kKeypointCount) {
    throw InvalidArgument("root_traj_2d: root id out of range");
  }
  RootTrajectory2D out;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const Vec2 d = seq[t].joints[root_id] - seq[t - 1].joints[root_id];
    out.diffs.push_back(d);
    out.sum += d;
  }
  return out;
}

FeatureBundle compute_features(std::span<const Pose3D> seq3d, std::span<const Pose2D> seq2d,
                               const AdjacentBonePairs& pairs, int root_id) {
  if (seq3d.empty()) throw InvalidArgument("compute_features: empty sequence");
  if (!seq2d.empty() && seq2d.size() != seq3d.size()) {
    throw InvalidArgument("compute_features: 2D and 3D sequences differ in length");
  }
  FeatureBundle out;
  for (const Pose3D& p : seq3d) out.cosines.push_back(joint_cosines(p, pairs));
  out.traj3d = traj_3d(seq3d);
  out.angle = bone_rotation_traj(seq3d, pairs);
  out.root2d = root_traj_2d(seq2d, root_id);
  return out;
}

std::string feature_bundle_to_json(const FeatureBundle& bundle) {
  using nlohmann::json;
  json j;
  j["frames"] = bundle.cosines.size();
  j["cosines"] = bundle.cosines;
  json d3 = json::array();
  for (const auto& frame : bundle.traj3d.diffs) {
    json f = json::array();
    for (const Vec3& v : frame) f.push_back({v.x(), v.y(), v.z()});
    d3.push_back(f);
  }
  j["diff3d"] = d3;
  j["diff_angle"] = bundle.angle.diffs;
  json d2 = json::array();
  for (const Vec2& v : bundle.root2d.diffs) d2.push_back({v.x(), v.y()});
  j["diff2d_root"] = d2;
  j["sums"] = {{"traj3d", {bundle.traj3d.sum.x(), bundle.traj3d.sum.y(), bundle.traj3d.sum.z()}},
               {"angle", bundle.angle.sum},
               {"root2d", {bundle.root2d.sum.x(), bundle.root2d.sum.y()}}};
  return j.dump(1) + "\n";
}

}  // namespace dhaug
