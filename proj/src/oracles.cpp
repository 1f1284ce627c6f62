#include "dhaug/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "dhaug/errors.hpp"

namespace dhaug::oracle {

Mat4 dh_matrix(double a, double d, double alpha, double theta) {
  Mat4 rx = Mat4::Identity(), tx = Mat4::Identity(), rz = Mat4::Identity(), tz = Mat4::Identity();
  rx(1, 1) = std::cos(alpha);
  rx(1, 2) = -std::sin(alpha);
  rx(2, 1) = std::sin(alpha);
  rx(2, 2) = std::cos(alpha);
  tx(0, 3) = a;
  rz(0, 0) = std::cos(theta);
  rz(0, 1) = -std::sin(theta);
  rz(1, 0) = std::sin(theta);
  rz(1, 1) = std::cos(theta);
  tz(2, 3) = d;
  Mat4 out = Mat4::Zero();
  const Mat4* chain[4] = {&rx, &tx, &rz, &tz};
  Mat4 acc = Mat4::Identity();
  for (const Mat4* m : chain) {
    out.setZero();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) out(i, j) += acc(i, k) * (*m)(k, j);
    acc = out;
  }
  return acc;
}

Pose3D forward_kinematics(const SkeletonTopology& topology, const ParamVector& params, const GlobalTransform& g) {
  Pose3D body;
  std::vector<char> done(kKeypointCount, 0);
  const auto& branches = topology.branches();
  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    Mat4 acc = Mat4::Identity();
    const auto& rows = branches[b].rows;
    for (int k = 0; k < static_cast<int>(rows.size()); ++k) {
      DhRow r = rows[k];
      for (DhField f : {DhField::a, DhField::d, DhField::alpha, DhField::theta}) {
        const int id = topology.param_id(b, k, f);
        if (id >= 0) r.value(f) += params[id];
      }
      const Mat4 m = dh_matrix(r.a, r.d, r.alpha, r.theta);
      Mat4 next = Mat4::Zero();
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int q = 0; q < 4; ++q) next(i, j) += acc(i, q) * m(q, j);
      acc = next;
      for (const auto& [row, kp] : branches[b].keypoint_map) {
        if (row == k && !done[kp]) {
          body.joints[kp] = Vec3(acc(0, 3), acc(1, 3), acc(2, 3));
          done[kp] = 1;
        }
      }
    }
  }
  const double cx = std::cos(g.rx), sx = std::sin(g.rx);
  const double cy = std::cos(g.ry), sy = std::sin(g.ry);
  const double cz = std::cos(g.rz), sz = std::sin(g.rz);
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  const Mat3 r = rx * ry * rz;
  Pose3D out;
  for (int j = 0; j < kKeypointCount; ++j) out.joints[j] = r * body.joints[j] + Vec3(g.tx, g.ty, g.tz);
  return out;
}

Vec2 project(const Vec3& p, double fx, double fy, double cx, double cy) {
  return {fx * (p.x() / p.z()) + cx, fy * (p.y() / p.z()) + cy};
}

double bone_cosine(const Vec3& prev, const Vec3& cur) {
  const double a = prev.squaredNorm(), b = cur.squaredNorm(), c = (cur - prev).squaredNorm();
  return (a + b - c) / (2.0 * std::sqrt(a) * std::sqrt(b));
}

Vec3 traj_3d_sum(const std::vector<Pose3D>& seq) {
  Vec3 s = Vec3::Zero();
  for (std::size_t t = 1; t < seq.size(); ++t)
    for (int i = 0; i < kKeypointCount; ++i) s += seq[t].joints[i] - seq[t - 1].joints[i];
  return s;
}

double angle_traj_sum(const std::vector<std::vector<double>>& cosines) {
  double s = 0.0;
  for (std::size_t t = 1; t < cosines.size(); ++t)
    for (std::size_t i = 0; i < cosines[t].size(); ++i) s += cosines[t][i] - cosines[t - 1][i];
  return s;
}

Vec2 root_2d_sum(const std::vector<Pose2D>& seq, int root) {
  Vec2 s = Vec2::Zero();
  for (std::size_t t = 1; t < seq.size(); ++t) s += seq[t].joints[root] - seq[t - 1].joints[root];
  return s;
}

ad::Tensor mlp_forward(const nn::Mlp& net, const ad::Tensor& x) {
  ad::Tensor h = x;
  for (const nn::Layer& l : net.layers()) {
    ad::Tensor z(h.rows(), l.weight.cols());
    for (long n = 0; n < h.rows(); ++n) {
      for (long j = 0; j < l.weight.cols(); ++j) {
        double acc = l.bias(0, j);
        for (long i = 0; i < h.cols(); ++i) acc += h(n, i) * l.weight(i, j);
        switch (l.activation) {
          case nn::Activation::identity: break;
          case nn::Activation::tanh: acc = std::tanh(acc); break;
          case nn::Activation::leaky_relu: acc = acc > 0.0 ? acc : 0.2 * acc; break;
        }
        z(n, j) = acc;
      }
    }
    h = z;
  }
  return h;
}

ad::Tensor numeric_gradient(const std::function<double(const ad::Tensor&)>& f, const ad::Tensor& x, double step) {
  ad::Tensor g(x.rows(), x.cols());
  ad::Tensor probe = x;
  for (long k = 0; k < x.size(); ++k) {
    const double v = x.data()[k];
    probe.data()[k] = v + step;
    const double fp = f(probe);
    probe.data()[k] = v - step;
    const double fm = f(probe);
    probe.data()[k] = v;
    g.data()[k] = (fp - fm) / (2.0 * step);
  }
  return g;
}

double relative_error(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_error", a.rows(), a.cols(), b.rows(), b.cols());
  if (a.size() == 0) return 0.0;
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace dhaug::oracle
