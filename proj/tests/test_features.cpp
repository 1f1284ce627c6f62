#include <cmath>
#include <set>

#include "doctest.h"
#include "dhaug/errors.hpp"
#include "dhaug/features.hpp"
#include "dhaug/oracles.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace dhaug;

namespace {

Pose3D two_bone_pose(const Vec3& first, const Vec3& second) {
  // keypoints 0 -> 1 -> 2, everything else parked at distinct points
  Pose3D p;
  for (int j = 0; j < kKeypointCount; ++j) p.joints[j] = Vec3(10.0 + j, 0, 0);
  p.joints[0] = Vec3::Zero();
  p.joints[1] = first;
  p.joints[2] = first + second;
  return p;
}

AdjacentBonePairs chain_pairs() {
  const std::vector<Bone> bones = {{0, 1}, {1, 2}};
  return adjacent_bone_pairs(bones);
}

std::vector<Pose3D> random_sequence(std::mt19937_64& rng, int frames) {
  std::vector<Pose3D> seq;
  for (int t = 0; t < frames; ++t) {
    seq.push_back(forward_kinematics(default_topology(), test::admissible_params(rng), test::random_global(rng)));
  }
  return seq;
}

}  // namespace

TEST_CASE("adjacent pairs of the default tree") {
  const SkeletonTopology& topo = default_topology();
  const AdjacentBonePairs pairs = adjacent_bone_pairs(topo);
  // every parent-child bone pair of the 16-keypoint tree
  CHECK(pairs.size() == 12);
  std::set<std::pair<int, int>> seen;
  for (const auto& [i, j] : pairs.pairs) {
    CHECK(i != j);
    CHECK(pairs.bones[j].parent == pairs.bones[i].child);
    // exactly one shared keypoint
    std::set<int> ends = {pairs.bones[i].parent, pairs.bones[i].child, pairs.bones[j].parent, pairs.bones[j].child};
    CHECK(ends.size() == 3);
    CHECK(seen.insert({i, j}).second);
  }
}

TEST_CASE("joint cosine examples") {
  const AdjacentBonePairs pairs = chain_pairs();
  REQUIRE(pairs.size() == 1);
  CHECK(joint_cosines(two_bone_pose({1, 0, 0}, {0, 2, 0}), pairs)[0] == doctest::Approx(0.0));
  CHECK(joint_cosines(two_bone_pose({1, 0, 0}, {3, 0, 0}), pairs)[0] == 1.0);
  CHECK(joint_cosines(two_bone_pose({1, 0, 0}, {1, 1, 0}), pairs)[0] ==
        doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
  CHECK(joint_cosines(two_bone_pose({1, 0, 0}, {-1, 0, 0}), pairs)[0] == -1.0);
}

TEST_CASE("joint cosines agree with the law of cosines") {
  std::mt19937_64 rng(31);
  const SkeletonTopology& topo = default_topology();
  const AdjacentBonePairs pairs = adjacent_bone_pairs(topo);
  for (int n = 0; n < 200; ++n) {
    const Pose3D p = forward_kinematics(topo, test::random_params(rng));
    const auto c = joint_cosines(p, pairs);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Bone& a = pairs.bones[pairs.pairs[k].first];
      const Bone& b = pairs.bones[pairs.pairs[k].second];
      const double o = oracle::bone_cosine(p.joints[a.child] - p.joints[a.parent], p.joints[b.child] - p.joints[b.parent]);
      CHECK(std::abs(c[k] - o) < 1e-9);
      CHECK(std::abs(c[k]) <= 1.0);
    }
  }
}

TEST_CASE("degenerate bones are reported") {
  try {
    joint_cosines(two_bone_pose({1, 0, 0}, {0, 0, 0}), chain_pairs());
    FAIL("no exception");
  } catch (const DegenerateBone& e) {
    CHECK(e.bone() == 1);
  }
}

TEST_CASE("3D trajectory") {
  std::mt19937_64 rng(32);
  const Pose3D p = forward_kinematics(default_topology(), test::random_params(rng));
  const std::vector<Pose3D> still(5, p);
  const Trajectory3D t = traj_3d(still);
  CHECK(t.diffs.size() == 4);
  CHECK(t.sum.isZero(0.0));

  Pose3D q = apply_global_transform(p, {0, 0, 0, 0.01, 0, 0});
  const std::vector<Pose3D> shift = {p, q};
  const Trajectory3D s = traj_3d(shift);
  REQUIRE(s.diffs.size() == 1);
  for (const Vec3& d : s.diffs[0]) CHECK((d - Vec3(0.01, 0, 0)).norm() < 1e-15);
  CHECK((s.sum - Vec3(0.16, 0, 0)).norm() < 1e-14);

  CHECK(traj_3d(std::vector<Pose3D>{p}).diffs.empty());
}

TEST_CASE("trajectory sums telescope") {
  std::mt19937_64 rng(33);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  for (int n = 0; n < 30; ++n) {
    const auto seq = random_sequence(rng, 2 + n % 9);
    const Trajectory3D t = traj_3d(seq);
    Vec3 direct = Vec3::Zero();
    for (int i = 0; i < kKeypointCount; ++i) direct += seq.back().joints[i] - seq.front().joints[i];
    CHECK((t.sum - direct).norm() <= 1e-12);
    CHECK((t.sum - oracle::traj_3d_sum(seq)).norm() <= 1e-12);

    const AngleTrajectory a = bone_rotation_traj(seq, pairs);
    const auto first = joint_cosines(seq.front(), pairs), last = joint_cosines(seq.back(), pairs);
    double angle_direct = 0;
    std::vector<std::vector<double>> cos;
    for (const Pose3D& p : seq) cos.push_back(joint_cosines(p, pairs));
    for (std::size_t i = 0; i < first.size(); ++i) angle_direct += last[i] - first[i];
    CHECK(std::abs(a.sum - angle_direct) <= 1e-12);
    CHECK(std::abs(a.sum - oracle::angle_traj_sum(cos)) <= 1e-12);
  }
}

TEST_CASE("angle trajectory example") {
  const AdjacentBonePairs pairs = chain_pairs();
  const std::vector<Pose3D> seq = {two_bone_pose({1, 0, 0}, {0, 1, 0}),
                                   two_bone_pose({1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0})};
  const AngleTrajectory a = bone_rotation_traj(seq, pairs);
  REQUIRE(a.diffs.size() == 1);
  CHECK(a.diffs[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.sum == doctest::Approx(0.5));
  const std::vector<Pose3D> still(3, seq[0]);
  CHECK(bone_rotation_traj(still, pairs).sum == 0.0);
}

TEST_CASE("2D root trajectory") {
  std::vector<Pose2D> seq(4);
  for (int t = 0; t < 4; ++t) seq[t].joints[0] = Vec2(100 + 2 * t, 50 - t);
  const RootTrajectory2D r = root_traj_2d(seq, 0);
  REQUIRE(r.diffs.size() == 3);
  for (const Vec2& d : r.diffs) CHECK((d - Vec2(2, -1)).norm() == 0.0);
  CHECK((r.sum - Vec2(6, -3)).norm() == 0.0);
  CHECK((r.sum - oracle::root_2d_sum(seq, 0)).norm() < 1e-12);
  const std::vector<Pose2D> still(4, seq[0]);
  CHECK(root_traj_2d(still, 0).sum.isZero(0.0));
  CHECK_THROWS_AS(root_traj_2d(seq, 16), InvalidArgument);
}

TEST_CASE("feature bundle") {
  std::mt19937_64 rng(34);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  std::vector<Pose3D> seq;
  std::vector<Pose2D> seq2;
  for (int t = 0; t < 6; ++t) {
    const GlobalTransform g{0.1 * t, 0.2, 0.3, 0.05 * t, 0.0, 4.5};
    seq.push_back(forward_kinematics(default_topology(), test::admissible_params(rng), g));
    seq2.push_back(project_pose(seq.back(), default_camera()));
  }
  const FeatureBundle f = compute_features(seq, seq2, pairs, 0);
  CHECK(f.cosines.size() == 6);
  CHECK(f.traj3d.diffs.size() == 5);
  CHECK(f.angle.diffs.size() == 5);
  CHECK(f.root2d.diffs.size() == 5);
  for (const auto& row : f.cosines) {
    for (double c : row) CHECK(std::abs(c) <= 1.0);
  }
  const auto j = nlohmann::json::parse(feature_bundle_to_json(f));
  CHECK(j["frames"] == 6);
  CHECK(j["diff3d"].size() == 5);
  CHECK(j["diff2d_root"].size() == 5);
  CHECK(j["sums"]["angle"].get<double>() == doctest::Approx(f.angle.sum));

  CHECK_THROWS_AS(compute_features(std::vector<Pose3D>{}, seq2, pairs, 0), InvalidArgument);
  seq2.pop_back();
  CHECK_THROWS_AS(compute_features(seq, seq2, pairs, 0), InvalidArgument);
}
