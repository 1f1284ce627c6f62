#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "dhaug/cli.hpp"
#include "dhaug/constraint.hpp"
#include "dhaug/dataset.hpp"
#include "dhaug/features.hpp"
#include "dhaug/nn.hpp"
#include "dhaug/oracles.hpp"
#include "dhaug/skeleton.hpp"
#include "json.hpp"

namespace dhaug {

namespace {

struct Check {
  const char* name;
  std::function<bool(std::ostream&)> run;
};

ParamVector random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-3.0, 3.0), len(-0.05, 0.05);
  ParamVector p;
  for (int i = 0; i < kParamCount; ++i) p[i] = i < kAngleParamCount ? ang(rng) : len(rng);
  return p;
}

GlobalTransform random_global(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-3.0, 3.0), t(-2.0, 2.0);
  return {ang(rng), ang(rng), ang(rng), t(rng), t(rng), t(rng)};
}

bool fk_oracle(std::ostream& log) {
  std::mt19937_64 rng(11);
  const SkeletonTopology& topo = default_topology();
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const ParamVector p = random_params(rng);
    const GlobalTransform g = random_global(rng);
    const Pose3D a = forward_kinematics(topo, p, g), b = oracle::forward_kinematics(topo, p, g);
    for (int j = 0; j < kKeypointCount; ++j) worst = std::max(worst, (a.joints[j] - b.joints[j]).cwiseAbs().maxCoeff());
  }
  log << "max deviation " << worst << " m";
  return worst <= 1e-9;
}

bool rest_pose_file(std::ostream& log) {
#ifdef DHAUG_DATA_DIR
  std::ifstream in(std::string(DHAUG_DATA_DIR) + "/rest_pose.json");
  if (!in) {
    log << "rest_pose.json not found, skipped";
    return true;
  }
  nlohmann::json j;
  in >> j;
  const Pose3D p = forward_kinematics(default_topology(), ParamVector{});
  double worst = 0.0;
  for (int k = 0; k < kKeypointCount; ++k) {
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(p.joints[k][c] - j["joints"][k][c].get<double>()));
  }
  log << "max deviation " << worst << " m";
  return worst <= 1e-9;
#else
  log << "no data directory, skipped";
  return true;
#endif
}

bool squash_soundness(std::ostream& log) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 5.0);
  const ConstraintTable& table = default_constraint_table();
  std::vector<double> raw(kParamCount);
  long bad = 0;
  for (int s = 0; s < 10000; ++s) {
    for (double& r : raw) r = n(rng);
    bad += !validate_params(squash_params(raw, table), table).ok;
  }
  log << bad << " invalid of 10000";
  return bad == 0;
}

bool projection(std::ostream& log) {
  const CameraIntrinsics cam{1000.0, 1000.0, 500.0, 500.0, 0.1};
  Pose3D p;
  p.joints.fill(Vec3(0.5, -0.25, 2.5));
  const Vec2 uv = project_pose(p, cam).joints[0];
  const Vec2 ref = oracle::project(Vec3(0.5, -0.25, 2.5), 1000.0, 1000.0, 500.0, 500.0);
  log << "(" << uv.x() << ", " << uv.y() << ")";
  return std::abs(uv.x() - 700.0) < 1e-9 && std::abs(uv.y() - 400.0) < 1e-9 && (uv - ref).norm() < 1e-9;
}

bool cosines(std::ostream& log) {
  std::mt19937_64 rng(13);
  const SkeletonTopology& topo = default_topology();
  const AdjacentBonePairs pairs = adjacent_bone_pairs(topo);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const Pose3D p = forward_kinematics(topo, random_params(rng), random_global(rng));
    const std::vector<double> c = joint_cosines(p, pairs);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const Bone& a = pairs.bones[pairs.pairs[k].first];
      const Bone& b = pairs.bones[pairs.pairs[k].second];
      const double ref = oracle::bone_cosine(p.joints[a.child] - p.joints[a.parent], p.joints[b.child] - p.joints[b.parent]);
      worst = std::max(worst, std::abs(c[k] - ref));
    }
  }
  log << pairs.size() << " pairs, max deviation " << worst;
  return worst <= 1e-9;
}

bool telescoping(std::ostream& log) {
  std::mt19937_64 rng(14);
  const SkeletonTopology& topo = default_topology();
  std::vector<Pose3D> seq;
  std::vector<Pose2D> seq2d;
  for (int t = 0; t < 9; ++t) {
    GlobalTransform g = random_global(rng);
    g.tz = 5.0;
    seq.push_back(forward_kinematics(topo, random_params(rng), g));
    seq2d.push_back(project_pose(seq.back(), default_camera()));
  }
  const AdjacentBonePairs pairs = adjacent_bone_pairs(topo);
  const FeatureBundle b = compute_features(seq, seq2d, pairs, topo.root_keypoint());
  const double e1 = (b.traj3d.sum - oracle::traj_3d_sum(seq)).cwiseAbs().maxCoeff();
  const double e2 = std::abs(b.angle.sum - oracle::angle_traj_sum(b.cosines));
  const double e3 = (b.root2d.sum - oracle::root_2d_sum(seq2d, topo.root_keypoint())).cwiseAbs().maxCoeff();
  log << "deviations " << e1 << ", " << e2 << ", " << e3;
  return e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-9;
}

bool mlp_gradient(std::ostream& log) {
  std::mt19937_64 rng(15);
  const nn::Mlp net = nn::Mlp::create({4, 6, 5, 1}, nn::Activation::tanh, nn::Activation::identity, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Tensor x(3, 4);
  for (long k = 0; k < x.size(); ++k) x.data()[k] = n(rng);
  const ad::Tensor plain = nn::mlp_forward(net, x);
  const double fwd = oracle::relative_error(plain, oracle::mlp_forward(net, x));
  ad::Tape tape;
  const nn::BoundMlp b = nn::bind(tape, net);
  tape.backward(ad::sum(nn::mlp_forward(b, tape.constant(x))));
  const ad::Tensor w0 = net.layers()[0].weight;
  const ad::Tensor fd = oracle::numeric_gradient(
      [&](const ad::Tensor& w) {
        nn::Mlp m = net;
        m.layers()[0].weight = w;
        return nn::mlp_forward(m, x).sum();
      },
      w0);
  const double grad = oracle::relative_error(b.layers[0].weight.grad(), fd);
  log << "forward " << fwd << ", gradient " << grad;
  return fwd <= 1e-12 && grad <= 1e-5;
}

bool penalty(std::ostream& log) {
  nn::Mlp net({nn::Layer{ad::Tensor::Zero(3, 1), ad::Tensor::Constant(1, 1, 2.0), nn::Activation::identity}});
  ad::Tape tape;
  nn::MlpTrace trace;
  const nn::BoundMlp b = nn::bind(tape, net);
  nn::mlp_forward(b, tape.constant(ad::Tensor::Ones(4, 3)), &trace);
  const double gp = nn::gradient_penalty(nn::input_gradient(b, trace), 10.0).value()(0, 0);
  log << "constant critic penalty " << gp;
  return gp == 10.0;
}

}  // namespace

int run_selftest(std::ostream& out, const std::string& dataset) {
  std::vector<Check> checks = {{"fk-oracle", fk_oracle},     {"rest-pose-file", rest_pose_file},
                               {"squash-soundness", squash_soundness}, {"projection", projection},
                               {"cosines", cosines},         {"telescoping", telescoping},
                               {"mlp-gradient", mlp_gradient}, {"gradient-penalty", penalty}};
  if (!dataset.empty()) {
    checks.push_back({"dataset-records", [&](std::ostream& log) {
                        const LoadedDataset ds = load_dataset(dataset);
                        long bad = 0;
                        for (const DatasetRecord& r : ds.records) {
                          if (r.provenance == Provenance::synthetic) bad += check_record(r, default_constraint_table()) > 0;
                        }
                        log << ds.records.size() << " records, " << bad << " failing";
                        return bad == 0;
                      }});
  }
  int failed = 0;
  for (const Check& c : checks) {
    std::ostringstream log;
    bool ok = false;
    try {
      ok = c.run(log);
    } catch (const std::exception& e) {
      log << "threw: " << e.what();
    }
    failed += !ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << ": " << log.str() << "\n";
  }
  out << (failed == 0 ? "all checks passed\n" : std::to_string(failed) + " check(s) failed\n");
  return failed == 0 ? 0 : 2;
}

}  // namespace dhaug
