#pragma once

#include <array>
#include <numbers>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dhaug {

using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

inline constexpr int kBranchCount = 5;
inline constexpr int kKeypointCount = 16;
inline constexpr int kBoneCount = 15;
inline constexpr int kDofCount = 33;
inline constexpr int kAngleParamCount = 33;
inline constexpr int kLengthParamCount = 15;
inline constexpr int kParamCount = 48;
inline constexpr int kGlobalCount = 6;

inline double deg_to_rad(double degrees) { return degrees * std::numbers::pi / 180.0; }
inline double rad_to_deg(double radians) { return radians * 180.0 / std::numbers::pi; }

enum class DhField { a = 0, d = 1, alpha = 2, theta = 3 };

const char* field_name(DhField field);

struct VariableMask {
  bool a = false;
  bool d = false;
  bool alpha = false;
  bool theta = false;

  bool test(DhField field) const;
  int count() const { return int(a) + int(d) + int(alpha) + int(theta); }
};

/// One modified-DH link: RotX(alpha) * TransX(a) * RotZ(theta) * TransZ(d).
/// Lengths in meters, angles in radians.
struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta = 0.0;
  VariableMask variable;
  std::string name;
  /// Canonical row id; rows with equal ids are the same physical DOF seen
  /// from different branches.
  int shared_id = -1;

  double value(DhField field) const;
  double& value(DhField field);
};

struct KinematicBranch {
  std::string name;
  std::vector<DhRow> rows;
  /// (row index, keypoint id); a keypoint sits at the origin of the
  /// cumulative frame of its row.
  std::vector<std::pair<int, int>> keypoint_map;
  int shared_prefix_len = 0;
};

struct Bone {
  int parent = 0;
  int child = 0;
  bool operator==(const Bone&) const = default;
};

enum class ParamKind { angle, length };

struct ParamSlot {
  int branch = 0;
  int row = 0;
  DhField field = DhField::theta;
};

struct ParamInfo {
  std::string name;
  ParamKind kind = ParamKind::angle;
  DhField field = DhField::theta;
  double rest = 0.0;
  std::vector<ParamSlot> slots;
};

/// The five-branch human chain. Construct through `build`, which validates
/// every structural invariant and assigns canonical parameter ids: angle
/// parameters first (in canonical row order), then length parameters.
class SkeletonTopology {
 public:
  static SkeletonTopology build(std::vector<KinematicBranch> branches,
                                std::vector<std::string> keypoint_names, std::vector<Bone> bones);

  const std::vector<KinematicBranch>& branches() const { return branches_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  const std::vector<std::string>& keypoint_names() const { return keypoint_names_; }
  const std::vector<Bone>& bones() const { return bones_; }

  int param_count() const { return static_cast<int>(params_.size()); }
  int angle_param_count() const { return angle_count_; }
  int length_param_count() const { return param_count() - angle_count_; }
  int dof_count() const { return dof_count_; }
  int keypoint_count() const { return static_cast<int>(keypoint_names_.size()); }
  int root_keypoint() const { return root_keypoint_; }

  /// Canonical id of a variable slot, or -1 for a fixed value.
  int param_id(int branch, int row, DhField field) const;
  /// -1 when no parameter has that name.
  int find_param(std::string_view name) const;
  int find_keypoint(std::string_view name) const;
  /// Ids of the length parameter of each bone, in bone order.
  const std::vector<int>& bone_length_params() const { return bone_length_params_; }

  /// FNV-1a over a canonical text rendering; identifies the table in data
  /// file headers.
  std::uint64_t hash() const;

 private:
  std::vector<KinematicBranch> branches_;
  std::vector<ParamInfo> params_;
  std::vector<std::string> keypoint_names_;
  std::vector<Bone> bones_;
  std::vector<std::vector<std::array<int, 4>>> slot_ids_;
  std::vector<int> bone_length_params_;
  int angle_count_ = 0;
  int dof_count_ = 0;
  int root_keypoint_ = 0;
};

/// Deltas against the rest table, indexed by canonical parameter id.
struct ParamVector {
  std::vector<double> values = std::vector<double>(kParamCount, 0.0);

  ParamVector() = default;
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

struct GlobalTransform {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;

  /// Rx(rx) * Ry(ry) * Rz(rz), acting on column vectors.
  Mat3 rotation() const;
  Vec3 translation() const { return {tx, ty, tz}; }
  std::array<double, kGlobalCount> to_array() const { return {rx, ry, rz, tx, ty, tz}; }
  static GlobalTransform from_array(std::span<const double> v);
};

struct Pose3D {
  std::array<Vec3, kKeypointCount> joints;

  Pose3D() { joints.fill(Vec3::Zero()); }
};

Mat4 dh_matrix(double a, double d, double alpha, double theta);

/// Cumulative products M'_0 = M(row_0), M'_{k+1} = M'_k * M(row_{k+1}).
std::vector<Mat4> compose_chain(std::span<const DhRow> rows);

/// Rest rows of one branch with the deltas of `params` applied.
std::vector<DhRow> resolve_branch(const SkeletonTopology& topology, int branch,
                                  const ParamVector& params);

/// Cumulative frames of every branch, each branch composed on its own.
std::vector<std::vector<Mat4>> branch_frames(const SkeletonTopology& topology,
                                             const ParamVector& params);

/// Keypoints in the body frame; rows shared between branches are composed once.
Pose3D local_pose(const SkeletonTopology& topology, const ParamVector& params);

Pose3D apply_global_transform(const Pose3D& pose, const GlobalTransform& g);

Pose3D forward_kinematics(const SkeletonTopology& topology, const ParamVector& params,
                          const GlobalTransform& g = {});

/// Forward kinematics together with the Jacobian of the 48 output coordinates
/// (joint-major, x/y/z) with respect to the parameters and the six global
/// values (rx, ry, rz, tx, ty, tz).
struct FkJacobian {
  Eigen::MatrixXd params;  // (3 * keypoints) x param_count
  Eigen::MatrixXd global;  // (3 * keypoints) x 6
};
Pose3D forward_kinematics_jacobian(const SkeletonTopology& topology, const ParamVector& params,
                                   const GlobalTransform& g, FkJacobian& jacobian);

const SkeletonTopology& default_topology();

SkeletonTopology load_topology(const std::string& path);
void save_topology(const SkeletonTopology& topology, const std::string& path);
std::string topology_to_json(const SkeletonTopology& topology);
SkeletonTopology topology_from_json(const std::string& text, const std::string& origin = "<string>");

/// Euclidean length of every bone of `pose`, in bone order.
std::array<double, kBoneCount> bone_lengths(const SkeletonTopology& topology, const Pose3D& pose);

}  // namespace dhaug
