#include "dhaug/pose_ops.hpp"

#include <algorithm>
#include <memory>

#include "dhaug/errors.hpp"

namespace dhaug {

using ad::Tensor;
using ad::Var;

void pose_to_row(const Pose3D& pose, double* row) {
  for (int j = 0; j < kKeypointCount; ++j) {
    for (int c = 0; c < 3; ++c) row[3 * j + c] = pose.joints[j][c];
  }
}

Pose3D pose_from_row(const double* row) {
  Pose3D p;
  for (int j = 0; j < kKeypointCount; ++j) p.joints[j] = Vec3(row[3 * j], row[3 * j + 1], row[3 * j + 2]);
  return p;
}

void pose2d_to_row(const Pose2D& pose, double* row) {
  for (int j = 0; j < kKeypointCount; ++j) {
    row[2 * j] = pose.joints[j].x();
    row[2 * j + 1] = pose.joints[j].y();
  }
}

Pose2D pose2d_from_row(const double* row) {
  Pose2D p;
  for (int j = 0; j < kKeypointCount; ++j) p.joints[j] = Vec2(row[2 * j], row[2 * j + 1]);
  return p;
}

Var fk_op(const SkeletonTopology& topology, Var params, Var globals) {
  const long n = params.rows();
  if (params.cols() != topology.param_count()) {
    throw ShapeError("fk_op parameters", params.rows(), params.cols(), n, topology.param_count());
  }
  if (globals.rows() != n || globals.cols() != kGlobalCount) {
    throw ShapeError("fk_op globals", globals.rows(), globals.cols(), n, kGlobalCount);
  }
  const int np = topology.param_count();
  const int nout = 3 * topology.keypoint_count();
  Tensor out(n, nout);
  // per sample [d pose / d params | d pose / d globals]
  auto jac = std::make_shared<std::vector<Eigen::MatrixXd>>(n);
  for (long r = 0; r < n; ++r) {
    const Tensor& pv = params.value();
    ParamVector p(std::vector<double>(pv.row(r).data(), pv.row(r).data() + np));
    const GlobalTransform g = GlobalTransform::from_array(
        std::span<const double>(globals.value().row(r).data(), kGlobalCount));
    FkJacobian j;
    const Pose3D pose = forward_kinematics_jacobian(topology, p, g, j);
    pose_to_row(pose, out.row(r).data());
    Eigen::MatrixXd& jr = (*jac)[r];
    jr.resize(nout, np + kGlobalCount);
    jr << j.params, j.global;
  }
  const int ip = params.id, ig = globals.id;
  return params.tape->record("fk", std::move(out), {ip, ig}, [ip, ig, jac, np](ad::Tape& tp, const Tensor& g) {
    const long n = g.rows();
    Tensor gp(n, np), gg(n, kGlobalCount);
    for (long r = 0; r < n; ++r) {
      const Eigen::RowVectorXd row = g.row(r) * (*jac)[r];
      gp.row(r) = row.head(np);
      gg.row(r) = row.tail(kGlobalCount);
    }
    tp.accumulate(ip, gp);
    tp.accumulate(ig, gg);
  });
}

Var project_op(Var poses, const CameraIntrinsics& camera, bool normalized) {
  camera.check();
  const Tensor& v = poses.value();
  if (v.cols() != 3 * kKeypointCount) throw ShapeError("project_op", v.rows(), v.cols(), v.rows(), 3 * kKeypointCount);
  const double sx = normalized ? 1.0 : camera.fx;
  const double sy = normalized ? 1.0 : camera.fy;
  const double ox = normalized ? 0.0 : camera.cx;
  const double oy = normalized ? 0.0 : camera.cy;
  Tensor out(v.rows(), 2 * kKeypointCount);
  for (long r = 0; r < v.rows(); ++r) {
    for (int j = 0; j < kKeypointCount; ++j) {
      const double x = v(r, 3 * j), y = v(r, 3 * j + 1), z = v(r, 3 * j + 2);
      if (!(z >= camera.z_min)) throw DepthViolation(j, z, camera.z_min);
      out(r, 2 * j) = sx * x / z + ox;
      out(r, 2 * j + 1) = sy * y / z + oy;
    }
  }
  const int ia = poses.id;
  return poses.tape->record("project", std::move(out), {ia}, [ia, sx, sy](ad::Tape& tp, const Tensor& g) {
    const Tensor& v = tp.value(ia);
    Tensor ga(v.rows(), v.cols());
    for (long r = 0; r < v.rows(); ++r) {
      for (int j = 0; j < kKeypointCount; ++j) {
        const double x = v(r, 3 * j), y = v(r, 3 * j + 1), z = v(r, 3 * j + 2);
        const double gu = g(r, 2 * j), gv = g(r, 2 * j + 1);
        ga(r, 3 * j) = gu * sx / z;
        ga(r, 3 * j + 1) = gv * sy / z;
        ga(r, 3 * j + 2) = -(gu * sx * x + gv * sy * y) / (z * z);
      }
    }
    tp.accumulate(ia, ga);
  });
}

Var cosine_op(Var poses, const AdjacentBonePairs& pairs) {
  const Tensor& v = poses.value();
  if (v.cols() != 3 * kKeypointCount) throw ShapeError("cosine_op", v.rows(), v.cols(), v.rows(), 3 * kKeypointCount);
  const long n = v.rows();
  const long np = static_cast<long>(pairs.size());
  Tensor out(n, np);
  for (long r = 0; r < n; ++r) {
    const std::vector<double> c = joint_cosines(pose_from_row(v.row(r).data()), pairs);
    for (long k = 0; k < np; ++k) out(r, k) = c[k];
  }
  const int ia = poses.id;
  return poses.tape->record("cosine", std::move(out), {ia}, [ia, pairs](ad::Tape& tp, const Tensor& g) {
    const Tensor& v = tp.value(ia);
    Tensor ga = Tensor::Zero(v.rows(), v.cols());
    for (long r = 0; r < v.rows(); ++r) {
      const Pose3D p = pose_from_row(v.row(r).data());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Bone& bp = pairs.bones[pairs.pairs[k].first];
        const Bone& bc = pairs.bones[pairs.pairs[k].second];
        const Vec3 u = p.joints[bp.child] - p.joints[bp.parent];
        const Vec3 w = p.joints[bc.child] - p.joints[bc.parent];
        const double lu = u.norm(), lw = w.norm();
        const double c = u.dot(w) / (lu * lw);
        const Vec3 du = g(r, k) * (w / (lu * lw) - c * u / (lu * lu));
        const Vec3 dw = g(r, k) * (u / (lu * lw) - c * w / (lw * lw));
        for (int a = 0; a < 3; ++a) {
          ga(r, 3 * bp.child + a) += du[a];
          ga(r, 3 * bp.parent + a) -= du[a];
          ga(r, 3 * bc.child + a) += dw[a];
          ga(r, 3 * bc.parent + a) -= dw[a];
        }
      }
    }
    tp.accumulate(ia, ga);
  });
}

}  // namespace dhaug
