#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dhaug/cli.hpp"
#include "dhaug/constraint.hpp"
#include "dhaug/dataset.hpp"
#include "dhaug/errors.hpp"
#include "dhaug/features.hpp"
#include "dhaug/gan.hpp"
#include "dhaug/skeleton.hpp"

namespace py = pybind11;
using namespace dhaug;

namespace {

using Joints3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Joints2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Joints3 to_array(const Pose3D& p) {
  Joints3 out(kKeypointCount, 3);
  for (int j = 0; j < kKeypointCount; ++j) out.row(j) = p.joints[j].transpose();
  return out;
}

Joints2 to_array(const Pose2D& p) {
  Joints2 out(kKeypointCount, 2);
  for (int j = 0; j < kKeypointCount; ++j) out.row(j) = p.joints[j].transpose();
  return out;
}

Pose3D pose_from(const Joints3& a) {
  if (a.rows() != kKeypointCount) throw InvalidArgument("pose needs 16 rows of (x, y, z)");
  Pose3D p;
  for (int j = 0; j < kKeypointCount; ++j) p.joints[j] = a.row(j).transpose();
  return p;
}

Pose2D pose2d_from(const Joints2& a) {
  if (a.rows() != kKeypointCount) throw InvalidArgument("2D pose needs 16 rows of (u, v)");
  Pose2D p;
  for (int j = 0; j < kKeypointCount; ++j) p.joints[j] = a.row(j).transpose();
  return p;
}

GlobalTransform global_from(const std::vector<double>& g) {
  return g.empty() ? GlobalTransform{} : GlobalTransform::from_array(g);
}

CameraIntrinsics camera_from(const py::dict& d) {
  CameraIntrinsics c = default_camera();
  if (d.contains("fx")) c.fx = d["fx"].cast<double>();
  if (d.contains("fy")) c.fy = d["fy"].cast<double>();
  if (d.contains("cx")) c.cx = d["cx"].cast<double>();
  if (d.contains("cy")) c.cy = d["cy"].cast<double>();
  if (d.contains("z_min")) c.z_min = d["z_min"].cast<double>();
  return c;
}

/// Stacks poses of a batch into (n, 16, k) shaped flat rows.
py::dict batch_dict(const GeneratedBatch& b) {
  const long n = static_cast<long>(b.poses3d.size());
  Rows p3(n, 3 * kKeypointCount), p2(n, 2 * kKeypointCount), params(n, kParamCount), globals(n, kGlobalCount);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < kKeypointCount; ++j) {
      p3.block<1, 3>(i, 3 * j) = b.poses3d[i].joints[j].transpose();
      p2.block<1, 2>(i, 2 * j) = b.poses2d[i].joints[j].transpose();
    }
    for (int k = 0; k < kParamCount; ++k) params(i, k) = b.params[i][k];
    const auto g = b.globals[i].to_array();
    for (int k = 0; k < kGlobalCount; ++k) globals(i, k) = g[k];
  }
  py::dict d;
  d["frames"] = b.frames;
  d["pose3d"] = p3;
  d["pose2d"] = p2;
  d["params"] = params;
  d["globals"] = globals;
  d["rejected"] = std::vector<bool>(b.rejected.begin(), b.rejected.end());
  return d;
}

}  // namespace

PYBIND11_MODULE(_dhaug, m) {
  m.doc() = "DH-parameter pose augmentation";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DepthViolation>(m, "DepthViolation", PyExc_ArithmeticError);
  py::register_exception<DegenerateBone>(m, "DegenerateBone", PyExc_ArithmeticError);

  m.attr("PARAM_COUNT") = kParamCount;
  m.attr("KEYPOINT_COUNT") = kKeypointCount;

  m.def("keypoint_names", [] { return default_topology().keypoint_names(); });
  m.def("param_names", [] {
    std::vector<std::string> out;
    for (const ParamInfo& p : default_topology().params()) out.push_back(p.name);
    return out;
  });
  m.def("bones", [] {
    std::vector<std::pair<int, int>> out;
    for (const Bone& b : default_topology().bones()) out.emplace_back(b.parent, b.child);
    return out;
  });
  m.def("topology_hash", [] { return default_topology().hash(); });
  m.def("bounds", [] {
    std::vector<std::pair<double, double>> out;
    for (const Bounds& b : default_constraint_table().bounds()) out.emplace_back(b.min, b.max);
    return out;
  }, "Delta bounds per parameter id (radians / meters).");

  m.def("dh_matrix", &dh_matrix, py::arg("a"), py::arg("d"), py::arg("alpha"), py::arg("theta"));
  m.def(
      "forward_kinematics",
      [](const std::vector<double>& params, const std::vector<double>& global) {
        return to_array(forward_kinematics(default_topology(), ParamVector(params), global_from(global)));
      },
      py::arg("params"), py::arg("global_transform") = std::vector<double>{},
      "Joints (16, 3) of the default skeleton. `params` holds 48 deltas from rest, "
      "`global_transform` (rx, ry, rz, tx, ty, tz).");
  m.def(
      "project",
      [](const Joints3& pose, const py::dict& camera) { return to_array(project_pose(pose_from(pose), camera_from(camera))); },
      py::arg("pose"), py::arg("camera") = py::dict());
  m.def("squash", [](const std::vector<double>& raw) { return squash_params(raw, default_constraint_table()).values; },
        py::arg("raw"));
  m.def(
      "validate",
      [](const std::vector<double>& params) {
        std::vector<py::tuple> out;
        for (const Violation& v : validate_params(ParamVector(params), default_constraint_table()).violations) {
          out.push_back(py::make_tuple(v.param, v.value, v.bound.min, v.bound.max));
        }
        return out;
      },
      py::arg("params"), "List of (id, value, min, max) violations; empty when valid.");
  m.def("joint_cosines", [](const Joints3& pose) {
    return joint_cosines(pose_from(pose), adjacent_bone_pairs(default_topology()));
  });
  m.def(
      "features",
      [](const std::vector<Joints3>& seq3d, const std::vector<Joints2>& seq2d) {
        std::vector<Pose3D> a;
        std::vector<Pose2D> b;
        for (const auto& p : seq3d) a.push_back(pose_from(p));
        for (const auto& p : seq2d) b.push_back(pose2d_from(p));
        const FeatureBundle f =
            compute_features(a, b, adjacent_bone_pairs(default_topology()), default_topology().root_keypoint());
        py::dict d;
        d["cosines"] = f.cosines;
        d["diff_angle"] = f.angle.diffs;
        d["traj3d_sum"] = std::vector<double>{f.traj3d.sum.x(), f.traj3d.sum.y(), f.traj3d.sum.z()};
        d["angle_sum"] = f.angle.sum;
        d["root2d_sum"] = std::vector<double>{f.root2d.sum.x(), f.root2d.sum.y()};
        return d;
      },
      py::arg("seq3d"), py::arg("seq2d") = std::vector<Joints2>{});
  m.def("gamma_schedule", &gamma_schedule, py::arg("epoch"), py::arg("beta_epoch") = 4);

  m.def(
      "generate",
      [](long count, std::uint64_t seed, const std::string& mode, int frames) {
        TrainConfig c;
        c.mode = mode_from_name(mode);
        c.frames = frames;
        std::mt19937_64 rng(seed);
        const DhGenerator g =
            DhGenerator::create(c, default_topology(), default_constraint_table(), default_camera(), rng);
        return batch_dict(generate(g, sample_latent(count, g.z_dim(), rng)));
      },
      py::arg("count"), py::arg("seed") = 0, py::arg("mode") = "single", py::arg("frames") = 9,
      "Samples from an untrained generator initialized from `seed`.");

  m.def(
      "load_dataset",
      [](const std::string& path) {
        const LoadedDataset ds = load_dataset(path);
        const long n = static_cast<long>(ds.records.size());
        Rows p3(n, 3 * kKeypointCount), p2(n, 2 * kKeypointCount);
        std::vector<long> seq(n);
        std::vector<int> frame(n);
        for (long i = 0; i < n; ++i) {
          const DatasetRecord& r = ds.records[i];
          for (int j = 0; j < kKeypointCount; ++j) {
            p3.block<1, 3>(i, 3 * j) = r.pose3d.joints[j].transpose();
            p2.block<1, 2>(i, 2 * j) = r.pose2d.joints[j].transpose();
          }
          seq[i] = r.sequence_id;
          frame[i] = r.frame_index;
        }
        py::dict d;
        d["pose3d"] = p3;
        d["pose2d"] = p2;
        d["sequence"] = seq;
        d["frame"] = frame;
        d["warnings"] = ds.warnings;
        return d;
      },
      py::arg("path"));

  m.def(
      "stand_in_corpus",
      [](const std::string& path, long count, int frames, std::uint64_t seed, double band, bool binary) {
        const BandCorpus corpus = narrow_band_corpus(default_topology(), default_constraint_table(),
                                                     default_camera(), count, frames, seed, band);
        std::vector<DatasetRecord> records;
        for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
          DatasetRecord r;
          r.pose3d = corpus.pairs[i].pose3d;
          r.pose2d = corpus.pairs[i].pose2d;
          r.camera = corpus.pairs[i].camera;
          r.sequence_id = static_cast<long>(i) / frames;
          r.frame_index = static_cast<int>(i % frames);
          r.provenance = Provenance::real;
          records.push_back(std::move(r));
        }
        save_dataset(records, path, default_topology().hash(), binary);
        return static_cast<long>(records.size());
      },
      py::arg("path"), py::arg("count"), py::arg("frames") = 1, py::arg("seed") = 0, py::arg("band") = 0.05,
      py::arg("binary") = false,
      "Writes `count` sequences drawn from a narrow band around the middle of every range, marked as "
      "real data. Returns the number of records.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the dhaug command line in-process; returns (exit code, stdout, stderr).");
}
