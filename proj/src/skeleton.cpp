#include "dhaug/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "dhaug/errors.hpp"
#include "json.hpp"

namespace dhaug {

namespace {

bool all_finite(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("topology: " + what); }

bool same_rest(const DhRow& x, const DhRow& y) {
  return x.a == y.a && x.d == y.d && x.alpha == y.alpha && x.theta == y.theta &&
         x.variable.a == y.variable.a && x.variable.d == y.variable.d &&
         x.variable.alpha == y.variable.alpha && x.variable.theta == y.variable.theta &&
         x.name == y.name;
}

}  // namespace

const char* field_name(DhField field) {
  switch (field) {
    case DhField::a:
      return "a";
    case DhField::d:
      return "d";
    case DhField::alpha:
      return "alpha";
    case DhField::theta:
      return "theta";
  }
  return "?";
}

bool VariableMask::test(DhField field) const {
  switch (field) {
    case DhField::a:
      return a;
    case DhField::d:
      return d;
    case DhField::alpha:
      return alpha;
    case DhField::theta:
      return theta;
  }
  return false;
}

double DhRow::value(DhField field) const {
  switch (field) {
    case DhField::a:
      return a;
    case DhField::d:
      return d;
    case DhField::alpha:
      return alpha;
    case DhField::theta:
      return theta;
  }
  return 0.0;
}

double& DhRow::value(DhField field) {
  switch (field) {
    case DhField::a:
      return a;
    case DhField::d:
      return d;
    case DhField::alpha:
      return alpha;
    case DhField::theta:
      break;
  }
  return theta;
}

SkeletonTopology SkeletonTopology::build(std::vector<KinematicBranch> branches,
                                         std::vector<std::string> keypoint_names,
                                         std::vector<Bone> bones) {
  if (branches.size() != kBranchCount) {
    fail("expected " + std::to_string(kBranchCount) + " branches, got " +
         std::to_string(branches.size()));
  }
  if (keypoint_names.size() != kKeypointCount) {
    fail("expected " + std::to_string(kKeypointCount) + " keypoints, got " +
         std::to_string(keypoint_names.size()));
  }
  if (bones.size() != kBoneCount) {
    fail("expected " + std::to_string(kBoneCount) + " bones, got " + std::to_string(bones.size()));
  }
  const int n_kp = static_cast<int>(keypoint_names.size());

  struct CanonicalRow {
    DhRow row;
    std::vector<int> prefix;
    int first_branch;
    int first_row;
    std::set<int> branches;
  };
  std::map<int, CanonicalRow> canonical;
  std::vector<int> canonical_order;

  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    const auto& br = branches[b];
    const int n_rows = static_cast<int>(br.rows.size());
    if (n_rows == 0) fail("branch " + std::to_string(b) + " has no rows");
    if (br.shared_prefix_len < 0 || br.shared_prefix_len > n_rows) {
      fail("branch " + std::to_string(b) + " shared prefix exceeds row count");
    }
    int last = -1;
    for (const auto& [row, kp] : br.keypoint_map) {
      if (row <= last || row >= n_rows) {
        fail("branch " + std::to_string(b) + " keypoint rows must increase and stay below " +
             std::to_string(n_rows));
      }
      if (kp < 0 || kp >= n_kp) fail("keypoint id " + std::to_string(kp) + " out of range");
      last = row;
    }
    std::vector<int> prefix;
    for (int k = 0; k < n_rows; ++k) {
      const DhRow& r = br.rows[k];
      if (!all_finite({r.a, r.d, r.alpha, r.theta})) {
        fail("row " + r.name + " has non-finite values");
      }
      if (r.a < 0.0) fail("row " + r.name + " has negative link length");
      if (r.variable.a && r.variable.d) fail("row " + r.name + " varies both a and d");
      if (r.shared_id < 0) fail("row " + r.name + " has no shared id");
      auto it = canonical.find(r.shared_id);
      if (it == canonical.end()) {
        canonical.emplace(r.shared_id, CanonicalRow{r, prefix, b, k, {b}});
        canonical_order.push_back(r.shared_id);
      } else {
        if (!same_rest(it->second.row, r)) {
          fail("rows sharing id " + std::to_string(r.shared_id) + " disagree");
        }
        if (it->second.prefix != prefix) {
          fail("row " + r.name + " is shared but reached through a different chain");
        }
        if (it->second.branches.count(b)) fail("row " + r.name + " repeats inside a branch");
        it->second.branches.insert(b);
      }
      prefix.push_back(r.shared_id);
    }
  }

  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    const auto& br = branches[b];
    for (int k = 0; k < static_cast<int>(br.rows.size()); ++k) {
      const bool shared = canonical.at(br.rows[k].shared_id).branches.size() > 1;
      if (shared != (k < br.shared_prefix_len)) {
        fail("branch " + br.name + ": shared prefix length " +
             std::to_string(br.shared_prefix_len) + " does not match the rows it shares");
      }
    }
  }

  // keypoints: every id placed, shared placements agree on the canonical row
  std::vector<int> kp_row(n_kp, -1);
  for (const auto& br : branches) {
    for (const auto& [row, kp] : br.keypoint_map) {
      const int sid = br.rows[row].shared_id;
      if (kp_row[kp] >= 0 && kp_row[kp] != sid) {
        fail("keypoint " + keypoint_names[kp] + " placed on different rows");
      }
      kp_row[kp] = sid;
    }
  }
  for (int j = 0; j < n_kp; ++j) {
    if (kp_row[j] < 0) fail("keypoint " + keypoint_names[j] + " is not placed on any row");
  }

  // bones form a tree
  std::vector<int> parent_of(n_kp, -1);
  for (const Bone& bone : bones) {
    if (bone.parent < 0 || bone.parent >= n_kp || bone.child < 0 || bone.child >= n_kp ||
        bone.parent == bone.child) {
      fail("bone endpoints out of range");
    }
    if (parent_of[bone.child] >= 0) fail("keypoint " + keypoint_names[bone.child] + " has two parents");
    parent_of[bone.child] = bone.parent;
  }
  int root = -1;
  for (int j = 0; j < n_kp; ++j) {
    if (parent_of[j] < 0) {
      if (root >= 0) fail("bone list is not connected");
      root = j;
    }
  }
  for (int j = 0; j < n_kp; ++j) {
    int steps = 0;
    for (int v = j; v != root; v = parent_of[v]) {
      if (++steps > n_kp) fail("bone list contains a cycle");
    }
  }

  SkeletonTopology topo;
  topo.root_keypoint_ = root;
  topo.dof_count_ = static_cast<int>(canonical.size());

  // canonical parameter ids: angles first, then lengths
  std::map<std::pair<int, int>, int> id_of;  // (shared id, field) -> param id
  std::vector<std::pair<int, DhField>> length_fields;
  for (int sid : canonical_order) {
    const DhRow& r = canonical.at(sid).row;
    for (DhField f : {DhField::theta, DhField::alpha}) {
      if (!r.variable.test(f)) continue;
      id_of[{sid, int(f)}] = static_cast<int>(topo.params_.size());
      topo.params_.push_back(
          {r.name + "." + field_name(f), ParamKind::angle, f, r.value(f), {}});
    }
    for (DhField f : {DhField::a, DhField::d}) {
      if (r.variable.test(f)) length_fields.emplace_back(sid, f);
    }
  }
  topo.angle_count_ = static_cast<int>(topo.params_.size());
  for (auto [sid, f] : length_fields) {
    const DhRow& r = canonical.at(sid).row;
    id_of[{sid, int(f)}] = static_cast<int>(topo.params_.size());
    topo.params_.push_back({r.name + "." + field_name(f), ParamKind::length, f, r.value(f), {}});
  }
  if (topo.dof_count_ != kDofCount) {
    fail("expected " + std::to_string(kDofCount) + " DOF rows, got " +
         std::to_string(topo.dof_count_));
  }
  if (topo.angle_count_ != kAngleParamCount || topo.length_param_count() != kLengthParamCount) {
    fail("expected " + std::to_string(kAngleParamCount) + " angle and " +
         std::to_string(kLengthParamCount) + " length parameters, got " +
         std::to_string(topo.angle_count_) + " and " + std::to_string(topo.length_param_count()));
  }

  topo.slot_ids_.resize(branches.size());
  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    const auto& br = branches[b];
    topo.slot_ids_[b].resize(br.rows.size());
    for (int k = 0; k < static_cast<int>(br.rows.size()); ++k) {
      auto& ids = topo.slot_ids_[b][k];
      ids.fill(-1);
      for (DhField f : {DhField::a, DhField::d, DhField::alpha, DhField::theta}) {
        if (!br.rows[k].variable.test(f)) continue;
        const int id = id_of.at({br.rows[k].shared_id, int(f)});
        ids[int(f)] = id;
        topo.params_[id].slots.push_back({b, k, f});
      }
    }
  }

  // each bone maps onto exactly one length parameter along its chain segment
  for (const Bone& bone : bones) {
    int found = -1;
    for (int b = 0; b < static_cast<int>(branches.size()) && found < 0; ++b) {
      const auto& br = branches[b];
      int row_p = -1;
      int row_c = -1;
      for (const auto& [row, kp] : br.keypoint_map) {
        if (kp == bone.parent) row_p = row;
        if (kp == bone.child) row_c = row;
      }
      if (row_p < 0 || row_c < 0) continue;
      if (row_c <= row_p) fail("bone " + keypoint_names[bone.parent] + "-" +
                               keypoint_names[bone.child] + " runs against its branch");
      for (const auto& [row, kp] : br.keypoint_map) {
        if (row > row_p && row < row_c) {
          fail("bone " + keypoint_names[bone.parent] + "-" + keypoint_names[bone.child] +
               " skips keypoint " + keypoint_names[kp]);
        }
      }
      std::vector<int> lengths;
      for (int k = row_p + 1; k <= row_c; ++k) {
        for (DhField f : {DhField::a, DhField::d}) {
          if (topo.slot_ids_[b][k][int(f)] >= 0) lengths.push_back(topo.slot_ids_[b][k][int(f)]);
        }
      }
      if (lengths.size() != 1) {
        fail("bone " + keypoint_names[bone.parent] + "-" + keypoint_names[bone.child] +
             " must carry exactly one length parameter");
      }
      found = lengths.front();
    }
    if (found < 0) {
      fail("bone " + keypoint_names[bone.parent] + "-" + keypoint_names[bone.child] +
           " does not follow any branch");
    }
    topo.bone_length_params_.push_back(found);
  }

  topo.branches_ = std::move(branches);
  topo.keypoint_names_ = std::move(keypoint_names);
  topo.bones_ = std::move(bones);
  return topo;
}

int SkeletonTopology::param_id(int branch, int row, DhField field) const {
  return slot_ids_.at(branch).at(row)[int(field)];
}

int SkeletonTopology::find_param(std::string_view name) const {
  for (int i = 0; i < param_count(); ++i) {
    if (params_[i].name == name) return i;
  }
  return -1;
}

int SkeletonTopology::find_keypoint(std::string_view name) const {
  for (int i = 0; i < keypoint_count(); ++i) {
    if (keypoint_names_[i] == name) return i;
  }
  return -1;
}

std::uint64_t SkeletonTopology::hash() const {
  std::ostringstream s;
  s.precision(17);
  for (const auto& br : branches_) {
    s << br.name << ' ' << br.shared_prefix_len << '\n';
    for (const auto& r : br.rows) {
      s << r.name << ' ' << r.shared_id << ' ' << r.a << ' ' << r.d << ' ' << r.alpha << ' '
        << r.theta << ' ' << r.variable.a << r.variable.d << r.variable.alpha << r.variable.theta
        << '\n';
    }
    for (const auto& [row, kp] : br.keypoint_map) s << row << ':' << kp << ' ';
    s << '\n';
  }
  for (const auto& n : keypoint_names_) s << n << ' ';
  for (const auto& b : bones_) s << b.parent << '-' << b.child << ' ';
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Mat3 GlobalTransform::rotation() const {
  const Mat3 r = (Eigen::AngleAxisd(rx, Vec3::UnitX()) * Eigen::AngleAxisd(ry, Vec3::UnitY()) *
                  Eigen::AngleAxisd(rz, Vec3::UnitZ()))
                     .toRotationMatrix();
  return r;
}

GlobalTransform GlobalTransform::from_array(std::span<const double> v) {
  if (v.size() != kGlobalCount) {
    throw InvalidArgument("global transform needs 6 values, got " + std::to_string(v.size()));
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

Mat4 dh_matrix(double a, double d, double alpha, double theta) {
  if (!all_finite({a, d, alpha, theta})) throw InvalidArgument("dh_matrix: non-finite input");
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double ca = std::cos(alpha);
  const double sa = std::sin(alpha);
  Mat4 m;
  m << ct, -st, 0.0, a,
       st * ca, ct * ca, -sa, -d * sa,
       st * sa, ct * sa, ca, d * ca,
       0.0, 0.0, 0.0, 1.0;
  return m;
}

std::vector<Mat4> compose_chain(std::span<const DhRow> rows) {
  if (rows.empty()) throw InvalidArgument("compose_chain: empty row list");
  std::vector<Mat4> out;
  out.reserve(rows.size());
  for (const DhRow& r : rows) {
    const Mat4 m = dh_matrix(r.a, r.d, r.alpha, r.theta);
    out.push_back(out.empty() ? m : Mat4(out.back() * m));
  }
  return out;
}

namespace {

void check_params(const SkeletonTopology& topology, const ParamVector& params) {
  if (static_cast<int>(params.size()) != topology.param_count()) {
    throw InvalidArgument("expected " + std::to_string(topology.param_count()) +
                          " parameters, got " + std::to_string(params.size()));
  }
  for (double v : params.values) {
    if (!std::isfinite(v)) throw InvalidArgument("parameter vector has non-finite entries");
  }
}

DhRow resolve_row(const SkeletonTopology& topology, int b, int k, const ParamVector& params) {
  DhRow r = topology.branches()[b].rows[k];
  for (DhField f : {DhField::a, DhField::d, DhField::alpha, DhField::theta}) {
    const int id = topology.param_id(b, k, f);
    if (id >= 0) r.value(f) += params[id];
  }
  return r;
}

// Cumulative frame of every canonical row, each composed once.
std::vector<Mat4> canonical_frames(const SkeletonTopology& topology, const ParamVector& params) {
  const auto& branches = topology.branches();
  int max_sid = 0;
  for (const auto& br : branches) {
    for (const auto& r : br.rows) max_sid = std::max(max_sid, r.shared_id);
  }
  std::vector<Mat4> frames(max_sid + 1);
  std::vector<char> done(frames.size(), 0);
  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    const auto& rows = branches[b].rows;
    const Mat4* prev = nullptr;
    for (int k = 0; k < static_cast<int>(rows.size()); ++k) {
      const int sid = rows[k].shared_id;
      if (!done[sid]) {
        const DhRow r = resolve_row(topology, b, k, params);
        const Mat4 m = dh_matrix(r.a, r.d, r.alpha, r.theta);
        frames[sid] = prev ? Mat4(*prev * m) : m;
        done[sid] = 1;
      }
      prev = &frames[sid];
    }
  }
  return frames;
}

}  // namespace

std::vector<DhRow> resolve_branch(const SkeletonTopology& topology, int branch,
                                  const ParamVector& params) {
  check_params(topology, params);
  std::vector<DhRow> rows;
  const int n = static_cast<int>(topology.branches().at(branch).rows.size());
  rows.reserve(n);
  for (int k = 0; k < n; ++k) rows.push_back(resolve_row(topology, branch, k, params));
  return rows;
}

std::vector<std::vector<Mat4>> branch_frames(const SkeletonTopology& topology,
                                             const ParamVector& params) {
  std::vector<std::vector<Mat4>> out;
  for (int b = 0; b < static_cast<int>(topology.branches().size()); ++b) {
    out.push_back(compose_chain(resolve_branch(topology, b, params)));
  }
  return out;
}

Pose3D local_pose(const SkeletonTopology& topology, const ParamVector& params) {
  check_params(topology, params);
  const std::vector<Mat4> frames = canonical_frames(topology, params);
  Pose3D pose;
  for (const auto& br : topology.branches()) {
    for (const auto& [row, kp] : br.keypoint_map) {
      pose.joints[kp] = frames[br.rows[row].shared_id].block<3, 1>(0, 3);
    }
  }
  return pose;
}

Pose3D apply_global_transform(const Pose3D& pose, const GlobalTransform& g) {
  if (!all_finite({g.rx, g.ry, g.rz, g.tx, g.ty, g.tz})) {
    throw InvalidArgument("global transform has non-finite entries");
  }
  const Mat3 r = g.rotation();
  const Vec3 t = g.translation();
  Pose3D out;
  for (int j = 0; j < kKeypointCount; ++j) {
    if (!pose.joints[j].allFinite()) throw InvalidArgument("pose has non-finite joints");
    out.joints[j] = r * pose.joints[j] + t;
  }
  return out;
}

Pose3D forward_kinematics(const SkeletonTopology& topology, const ParamVector& params,
                          const GlobalTransform& g) {
  return apply_global_transform(local_pose(topology, params), g);
}

Pose3D forward_kinematics_jacobian(const SkeletonTopology& topology, const ParamVector& params,
                                   const GlobalTransform& g, FkJacobian& jacobian) {
  check_params(topology, params);
  const std::vector<Mat4> frames = canonical_frames(topology, params);
  const int n_kp = topology.keypoint_count();
  Eigen::MatrixXd local = Eigen::MatrixXd::Zero(3 * n_kp, topology.param_count());
  Pose3D body;
  std::vector<char> seen(n_kp, 0);
  const auto& branches = topology.branches();
  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    const auto& rows = branches[b].rows;
    for (const auto& [kp_row, kp] : branches[b].keypoint_map) {
      if (seen[kp]) continue;
      seen[kp] = 1;
      const Vec3 p = frames[rows[kp_row].shared_id].block<3, 1>(0, 3);
      body.joints[kp] = p;
      for (int k = 0; k <= kp_row; ++k) {
        const Mat4& f = frames[rows[k].shared_id];
        const Mat4 prev = k > 0 ? frames[rows[k - 1].shared_id] : Mat4(Mat4::Identity());
        const Vec3 z = f.block<3, 1>(0, 2);
        const Vec3 o = f.block<3, 1>(0, 3);
        const Vec3 x_prev = prev.block<3, 1>(0, 0);
        const Vec3 o_prev = prev.block<3, 1>(0, 3);
        const auto col = [&](DhField fld) { return topology.param_id(b, k, fld); };
        if (int id = col(DhField::theta); id >= 0) {
          local.block<3, 1>(3 * kp, id) += z.cross(p - o);
        }
        if (int id = col(DhField::alpha); id >= 0) {
          local.block<3, 1>(3 * kp, id) += x_prev.cross(p - o_prev);
        }
        if (int id = col(DhField::a); id >= 0) local.block<3, 1>(3 * kp, id) += x_prev;
        if (int id = col(DhField::d); id >= 0) local.block<3, 1>(3 * kp, id) += z;
      }
    }
  }

  const Mat3 rx = Eigen::AngleAxisd(g.rx, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(g.ry, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rz = Eigen::AngleAxisd(g.rz, Vec3::UnitZ()).toRotationMatrix();
  // derivative of a rotation about axis e: skew(e) * R
  const auto skew = [](const Vec3& e) {
    Mat3 s;
    s << 0, -e.z(), e.y(), e.z(), 0, -e.x(), -e.y(), e.x(), 0;
    return s;
  };
  const Mat3 r = rx * ry * rz;
  const Mat3 d_rx = skew(Vec3::UnitX()) * rx * ry * rz;
  const Mat3 d_ry = rx * skew(Vec3::UnitY()) * ry * rz;
  const Mat3 d_rz = rx * ry * skew(Vec3::UnitZ()) * rz;

  jacobian.params.resize(3 * n_kp, topology.param_count());
  jacobian.global.resize(3 * n_kp, kGlobalCount);
  Pose3D out;
  for (int j = 0; j < n_kp; ++j) {
    const Vec3& p = body.joints[j];
    out.joints[j] = r * p + g.translation();
    jacobian.params.middleRows<3>(3 * j) = r * local.middleRows<3>(3 * j);
    jacobian.global.block<3, 1>(3 * j, 0) = d_rx * p;
    jacobian.global.block<3, 1>(3 * j, 1) = d_ry * p;
    jacobian.global.block<3, 1>(3 * j, 2) = d_rz * p;
    jacobian.global.block<3, 3>(3 * j, 3).setIdentity();
  }
  return out;
}

std::array<double, kBoneCount> bone_lengths(const SkeletonTopology& topology, const Pose3D& pose) {
  std::array<double, kBoneCount> out{};
  const auto& bones = topology.bones();
  for (std::size_t i = 0; i < bones.size() && i < out.size(); ++i) {
    out[i] = (pose.joints[bones[i].child] - pose.joints[bones[i].parent]).norm();
  }
  return out;
}

// ---------------------------------------------------------------------------
// shipped table

namespace {

struct TableRow {
  int branch;
  int row;
  const char* name;
  double a;
  double d;
  double alpha_deg;
  double theta_deg;
  bool var_a;
  bool var_d;
  int shared_id;
  int keypoint;
};

constexpr TableRow kDefaultRows[] = {
#include "default_tables.inc"
};

struct BranchMeta {
  const char* name;
  int shared_prefix;
};
constexpr BranchMeta kDefaultBranches[] = {
    {"right_leg", 3}, {"left_leg", 3}, {"torso", 9}, {"left_arm", 9}, {"right_arm", 9}};

const char* const kKeypointNames[] = {
    "pelvis", "r_hip", "r_knee",   "r_ankle",    "l_hip",   "l_knee",  "l_ankle",    "spine",
    "thorax", "head",  "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};

constexpr Bone kDefaultBones[] = {{0, 1}, {1, 2},  {2, 3},  {0, 4},   {4, 5},
                                  {5, 6}, {0, 7},  {7, 8},  {8, 9},   {8, 10},
                                  {10, 11}, {11, 12}, {8, 13}, {13, 14}, {14, 15}};

SkeletonTopology make_default_topology() {
  std::vector<KinematicBranch> branches(std::size(kDefaultBranches));
  for (std::size_t b = 0; b < branches.size(); ++b) {
    branches[b].name = kDefaultBranches[b].name;
    branches[b].shared_prefix_len = kDefaultBranches[b].shared_prefix;
  }
  for (const TableRow& t : kDefaultRows) {
    DhRow r;
    r.a = t.a;
    r.d = t.d;
    r.alpha = deg_to_rad(t.alpha_deg);
    r.theta = deg_to_rad(t.theta_deg);
    r.variable.theta = true;
    r.variable.a = t.var_a;
    r.variable.d = t.var_d;
    r.name = t.name;
    r.shared_id = t.shared_id;
    auto& br = branches.at(t.branch);
    if (t.keypoint >= 0) br.keypoint_map.emplace_back(t.row, t.keypoint);
    br.rows.push_back(std::move(r));
  }
  return SkeletonTopology::build(
      std::move(branches), std::vector<std::string>(std::begin(kKeypointNames), std::end(kKeypointNames)),
      std::vector<Bone>(std::begin(kDefaultBones), std::end(kDefaultBones)));
}

}  // namespace

const SkeletonTopology& default_topology() {
  static const SkeletonTopology topo = make_default_topology();
  return topo;
}

// ---------------------------------------------------------------------------
// text format (angles in degrees, lengths in meters)

std::string topology_to_json(const SkeletonTopology& topology) {
  using nlohmann::json;
  json j;
  j["format"] = "dhaug-topology/1";
  j["units"] = {{"angles", "degrees"}, {"lengths", "meters"}};
  j["keypoints"] = topology.keypoint_names();
  json bones = json::array();
  for (const Bone& b : topology.bones()) bones.push_back({b.parent, b.child});
  j["bones"] = bones;
  json branches = json::array();
  json rows = json::array();
  for (int b = 0; b < static_cast<int>(topology.branches().size()); ++b) {
    const auto& br = topology.branches()[b];
    branches.push_back({{"id", b}, {"name", br.name}, {"shared_prefix", br.shared_prefix_len}});
    for (int k = 0; k < static_cast<int>(br.rows.size()); ++k) {
      const DhRow& r = br.rows[k];
      int kp = -1;
      for (const auto& [row, id] : br.keypoint_map) {
        if (row == k) kp = id;
      }
      json variable = json::array();
      for (DhField f : {DhField::theta, DhField::alpha, DhField::a, DhField::d}) {
        if (r.variable.test(f)) variable.push_back(field_name(f));
      }
      rows.push_back({{"branch", b},
                      {"row", k},
                      {"name", r.name},
                      {"a", r.a},
                      {"d", r.d},
                      {"alpha", rad_to_deg(r.alpha)},
                      {"theta", rad_to_deg(r.theta)},
                      {"variable", variable},
                      {"shared_id", r.shared_id},
                      {"keypoint", kp}});
    }
  }
  j["branches"] = branches;
  j["rows"] = rows;
  return j.dump(1) + "\n";
}

SkeletonTopology topology_from_json(const std::string& text, const std::string& origin) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, e.what());
  }
  try {
    std::vector<KinematicBranch> branches;
    for (const auto& jb : j.at("branches")) {
      const auto id = jb.at("id").get<std::size_t>();
      if (id >= branches.size()) branches.resize(id + 1);
      branches[id].name = jb.at("name").get<std::string>();
      branches[id].shared_prefix_len = jb.at("shared_prefix").get<int>();
    }
    for (const auto& jr : j.at("rows")) {
      const auto b = jr.at("branch").get<std::size_t>();
      const int k = jr.at("row").get<int>();
      if (b >= branches.size()) throw ParseError(origin, 0, "row references unknown branch");
      auto& br = branches[b];
      if (k != static_cast<int>(br.rows.size())) {
        throw ParseError(origin, 0, "rows of branch " + std::to_string(b) + " out of order");
      }
      DhRow r;
      r.name = jr.at("name").get<std::string>();
      r.a = jr.at("a").get<double>();
      r.d = jr.at("d").get<double>();
      r.alpha = deg_to_rad(jr.at("alpha").get<double>());
      r.theta = deg_to_rad(jr.at("theta").get<double>());
      r.shared_id = jr.at("shared_id").get<int>();
      for (const auto& v : jr.at("variable")) {
        const auto s = v.get<std::string>();
        if (s == "a") {
          r.variable.a = true;
        } else if (s == "d") {
          r.variable.d = true;
        } else if (s == "alpha") {
          r.variable.alpha = true;
        } else if (s == "theta") {
          r.variable.theta = true;
        } else {
          throw ParseError(origin, 0, "unknown variable field '" + s + "'");
        }
      }
      const int kp = jr.value("keypoint", -1);
      if (kp >= 0) br.keypoint_map.emplace_back(k, kp);
      br.rows.push_back(std::move(r));
    }
    std::vector<Bone> bones;
    for (const auto& jb : j.at("bones")) bones.push_back({jb.at(0).get<int>(), jb.at(1).get<int>()});
    return SkeletonTopology::build(std::move(branches),
                                   j.at("keypoints").get<std::vector<std::string>>(),
                                   std::move(bones));
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, e.what());
  }
}

SkeletonTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open topology file");
  std::stringstream buf;
  buf << in.rdbuf();
  return topology_from_json(buf.str(), path);
}

void save_topology(const SkeletonTopology& topology, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << topology_to_json(topology);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace dhaug
