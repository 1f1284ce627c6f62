#include "dhaug/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dhaug/camera.hpp"
#include "dhaug/constraint.hpp"
#include "dhaug/dataset.hpp"
#include "dhaug/errors.hpp"
#include "dhaug/features.hpp"
#include "dhaug/gan.hpp"
#include "dhaug/skeleton.hpp"
#include "json.hpp"

namespace dhaug {

namespace {

using nlohmann::json;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string pose_json(const Pose3D& pose, const SkeletonTopology& topo) {
  json joints = json::array();
  for (const Vec3& p : pose.joints) joints.push_back({p.x(), p.y(), p.z()});
  return json({{"format", "dhaug-pose/1"}, {"keypoints", topo.keypoint_names()}, {"joints", joints}}).dump(1) + "\n";
}

Pose3D read_pose(const std::string& path) {
  const json j = read_json(path);
  try {
    const auto& joints = j.at("joints");
    if (joints.size() != kKeypointCount) throw ParseError(path, 0, "pose needs 16 joints");
    Pose3D p;
    for (int k = 0; k < kKeypointCount; ++k) {
      p.joints[k] = Vec3(joints[k].at(0).get<double>(), joints[k].at(1).get<double>(), joints[k].at(2).get<double>());
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
}

/// Parameter deltas and global values from a params file. Angles in degrees.
struct ParamsFile {
  ParamVector params;
  GlobalTransform global;
};

ParamsFile read_params(const std::string& path, const SkeletonTopology& topo) {
  ParamsFile pf;
  pf.params.values.assign(topo.param_count(), 0.0);
  if (path.empty()) return pf;
  const json j = read_json(path);
  const auto to_internal = [&](int id, double v) {
    return topo.params()[id].kind == ParamKind::angle ? deg_to_rad(v) : v;
  };
  try {
    if (j.contains("values")) {
      const auto v = j.at("values").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != topo.param_count()) {
        throw ParseError(path, 0, "values needs " + std::to_string(topo.param_count()) + " entries");
      }
      for (int id = 0; id < topo.param_count(); ++id) pf.params[id] = to_internal(id, v[id]);
    }
    if (j.contains("deltas")) {
      for (const auto& [name, value] : j.at("deltas").items()) {
        const int id = topo.find_param(name);
        if (id < 0) throw ParseError(path, 0, "unknown parameter '" + name + "'");
        pf.params[id] = to_internal(id, value.get<double>());
      }
    }
    if (j.contains("global")) {
      const json& g = j.at("global");
      pf.global.rx = deg_to_rad(g.value("rx", 0.0));
      pf.global.ry = deg_to_rad(g.value("ry", 0.0));
      pf.global.rz = deg_to_rad(g.value("rz", 0.0));
      pf.global.tx = g.value("tx", 0.0);
      pf.global.ty = g.value("ty", 0.0);
      pf.global.tz = g.value("tz", 0.0);
    }
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  return pf;
}

struct CameraOptions {
  CameraIntrinsics cam = default_camera();
  void add(CLI::App* app) {
    app->add_option("--fx", cam.fx, "focal length x (px)");
    app->add_option("--fy", cam.fy, "focal length y (px)");
    app->add_option("--cx", cam.cx, "principal point x (px)");
    app->add_option("--cy", cam.cy, "principal point y (px)");
    app->add_option("--zmin", cam.z_min, "nearest admissible depth (m)");
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DH-parameter pose augmentation: kinematics, constraints, GAN training and synthesis", "dhaug"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  std::string config_path, topology_path, constraints_path;
  app.add_option("--seed", seed, "random seed");
  app.add_option("--config", config_path, "training configuration (JSON)");
  app.add_option("--topology", topology_path, "topology file (JSON)");
  app.add_option("--constraints", constraints_path, "constraint table file (JSON)");

  std::string params_path, out_path, pose_path, dataset_path, video_path, checkpoint_path, data_path, out_dir;
  std::string mode_name_opt;
  long count = 1000, sequence = -1, batch = 0;
  int frames = 0, epochs = 0;
  bool binary = false, synth_each = false;
  CameraOptions camera_opts;

  auto* fk = app.add_subcommand("fk", "forward kinematics of a params file (rest pose without one)");
  fk->add_option("--params", params_path, "params file: deltas by name, angles in degrees");
  fk->add_option("-o,--out", out_path, "output pose file (stdout by default)");

  auto* validate = app.add_subcommand("validate", "check a params file or dataset against the constraint table");
  validate->add_option("--params", params_path, "params file");
  validate->add_option("--dataset", dataset_path, "dataset file");

  auto* project = app.add_subcommand("project", "project a pose file to pixels");
  project->add_option("--pose", pose_path, "pose file (dhaug-pose/1)")->required();
  project->add_option("-o,--out", out_path, "output file");
  camera_opts.add(project);

  auto* features = app.add_subcommand("features", "feature bundle of one sequence");
  features->add_option("--dataset", dataset_path, "dataset file");
  features->add_option("--sequence", sequence, "sequence id (first sequence by default)");
  features->add_option("--video", video_path, "skeleton video file instead of a dataset");
  features->add_option("-o,--out", out_path, "output file");
  camera_opts.add(features);

  auto* synth = app.add_subcommand("synth", "synthesize a dataset of 2D-3D pairs");
  synth->add_option("--count", count, "poses, or sequences in video mode")->check(CLI::PositiveNumber);
  synth->add_option("-o,--out", out_path, "dataset file")->required();
  synth->add_option("--mode", mode_name_opt, "single or video");
  synth->add_option("--frames", frames, "frames per sequence in video mode");
  synth->add_option("--checkpoint", checkpoint_path, "trained generator (untrained from --seed otherwise)");
  synth->add_option("--batch", batch, "generation batch size");
  synth->add_flag("--binary", binary, "float32 binary records");
  camera_opts.add(synth);

  auto* train = app.add_subcommand("train", "train the generator against the critics");
  train->add_option("--data", data_path, "real dataset file")->required();
  train->add_option("--out-dir", out_dir, "directory for checkpoint, metrics and synthesized data")->required();
  train->add_option("--epochs", epochs, "override the configured epoch count");
  train->add_option("--mode", mode_name_opt, "single or video");
  train->add_option("--frames", frames, "frames per sequence in video mode");
  train->add_option("--batch", batch, "override both batch sizes");
  train->add_flag("--synth", synth_each, "write each epoch's synthesized dataset");
  camera_opts.add(train);

  auto* export_video = app.add_subcommand("export-video", "write one skeleton sequence for plotting");
  export_video->add_option("-o,--out", out_path, "output file")->required();
  export_video->add_option("--frames", frames, "frames to generate (default 9)");
  export_video->add_option("--checkpoint", checkpoint_path, "trained video generator");
  export_video->add_option("--dataset", dataset_path, "export a sequence of this dataset instead");
  export_video->add_option("--sequence", sequence, "sequence id within --dataset");
  camera_opts.add(export_video);

  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");
  selftest->add_option("--dataset", dataset_path, "also check every record of this dataset");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const SkeletonTopology topo = topology_path.empty() ? default_topology() : load_topology(topology_path);
    const ConstraintTable table = constraints_path.empty()
                                      ? (topology_path.empty() ? default_constraint_table()
                                                               : throw InvalidArgument(
                                                                     "--topology needs a matching --constraints file"))
                                      : load_constraint_table(constraints_path, topo);
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    if (app.count("--seed") || config_path.empty()) cfg.seed = seed;
    if (!mode_name_opt.empty()) cfg.mode = mode_from_name(mode_name_opt);
    if (frames > 0) cfg.frames = frames;
    if (epochs > 0) cfg.epochs = epochs;
    if (batch > 0) cfg.batch_single = cfg.batch_video = static_cast<int>(batch);
    const CameraIntrinsics cam = camera_opts.cam;

    if (*fk) {
      const ParamsFile pf = read_params(params_path, topo);
      write_text(out_path, pose_json(forward_kinematics(topo, pf.params, pf.global), topo), out);
      return 0;
    }

    if (*validate) {
      if (params_path.empty() == dataset_path.empty()) {
        err << "validate needs exactly one of --params or --dataset\n";
        return 1;
      }
      if (!params_path.empty()) {
        const ParamsFile pf = read_params(params_path, topo);
        const ValidationReport rep = validate_params(pf.params, table);
        for (const Violation& v : rep.violations) {
          const ParamInfo& p = topo.params()[v.param];
          const bool angle = p.kind == ParamKind::angle;
          const Bounds e = table.effective(topo, v.param);
          const auto show = [&](double x) { return angle ? rad_to_deg(x) : x; };
          out << "violation " << p.name << ": value " << show(p.rest + v.value) << " outside [" << show(e.min)
              << ", " << show(e.max) << "]" << (angle ? " deg" : " m") << "\n";
        }
        out << (rep.ok ? "ok\n" : "invalid\n");
        return rep.ok ? 0 : 2;
      }
      const LoadedDataset ds = load_dataset(dataset_path, topo);
      for (const std::string& w : ds.warnings) err << "warning: " << w << "\n";
      long bad = 0;
      for (std::size_t i = 0; i < ds.records.size(); ++i) {
        if (long n = check_record(ds.records[i], table); n > 0) {
          ++bad;
          if (bad <= 20) out << "record " << i << ": " << n << " problem(s)\n";
        }
      }
      out << ds.records.size() << " records, " << bad << " invalid\n";
      return bad == 0 ? 0 : 2;
    }

    if (*project) {
      const Pose2D p = project_pose(read_pose(pose_path), cam);
      json joints = json::array();
      for (const Vec2& v : p.joints) joints.push_back({v.x(), v.y()});
      write_text(out_path,
                 json({{"format", "dhaug-pose2d/1"},
                       {"camera", {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}}},
                       {"joints", joints}})
                         .dump(1) +
                     "\n",
                 out);
      return 0;
    }

    if (*features) {
      std::vector<Pose3D> seq3d;
      std::vector<Pose2D> seq2d;
      if (!video_path.empty()) {
        seq3d = load_skeleton_video(video_path).frames;
        for (const Pose3D& p : seq3d) seq2d.push_back(project_pose(p, cam));
      } else if (!dataset_path.empty()) {
        const LoadedDataset ds = load_dataset(dataset_path, topo);
        for (const std::string& w : ds.warnings) err << "warning: " << w << "\n";
        if (ds.records.empty()) throw InvalidArgument("dataset is empty");
        const long id = sequence >= 0 ? sequence : ds.records.front().sequence_id;
        std::vector<const DatasetRecord*> rs;
        for (const auto& r : ds.records) {
          if (r.sequence_id == id) rs.push_back(&r);
        }
        if (rs.empty()) throw InvalidArgument("no records for sequence " + std::to_string(id));
        std::stable_sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->frame_index < b->frame_index; });
        for (const auto* r : rs) {
          seq3d.push_back(r->pose3d);
          seq2d.push_back(r->pose2d);
        }
      } else {
        err << "features needs --dataset or --video\n";
        return 1;
      }
      const FeatureBundle b = compute_features(seq3d, seq2d, adjacent_bone_pairs(topo), topo.root_keypoint());
      write_text(out_path, feature_bundle_to_json(b), out);
      return 0;
    }

    if (*synth) {
      cfg.check();
      std::mt19937_64 rng(cfg.seed);
      const DhGenerator gen = checkpoint_path.empty() ? DhGenerator::create(cfg, topo, table, cam, rng)
                                                      : load_generator(checkpoint_path, topo, table, cam);
      SynthOptions opt;
      opt.count = count;
      opt.seed = cfg.seed;
      opt.binary = binary;
      if (batch > 0) opt.batch = batch;
      const SynthSummary s = synthesize_dataset(gen, opt, out_path);
      out << json({{"count", s.count},
                   {"records", s.records},
                   {"violations", s.violations},
                   {"rejected", s.rejected},
                   {"mode", mode_name(gen.mode())},
                   {"frames", gen.frames()},
                   {"seconds", s.seconds}})
                 .dump()
          << "\n";
      return s.violations == 0 ? 0 : 2;
    }

    if (*train) {
      cfg.check();
      const LoadedDataset ds = load_dataset(data_path, topo);
      for (const std::string& w : ds.warnings) err << "warning: " << w << "\n";
      const std::vector<PosePair> pairs = training_pairs(ds.records, cfg.mode, cfg.frame_count());
      if (pairs.empty()) throw InvalidArgument("no usable training data in " + data_path);
      TrainState state = make_train_state(cfg, topo, table, cam);
      const RealCorpus corpus =
          make_real_corpus(pairs, state.generator.pairs(), cfg.mode, cfg.frame_count(), topo.root_keypoint());
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      std::ofstream log(dir / "metrics.jsonl", std::ios::app);
      if (!log) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
      for (int e = 0; e < cfg.epochs; ++e) {
        std::optional<DatasetWriter> writer;
        if (synth_each) writer.emplace((dir / ("epoch_" + std::to_string(e) + ".dhaug")).string(), topo.hash());
        long next_seq = 0;
        const EpochMetrics m = train_epoch(state, corpus, [&](const GeneratedBatch& b) {
          if (!writer) return;
          for (const DatasetRecord& r : batch_records(b, cam, next_seq)) writer->write(r);
          next_seq += b.sequences();
        });
        if (writer) writer->close();
        const std::string line = epoch_metrics_to_json(m);
        log << line << "\n";
        log.flush();
        out << line << "\n";
        save_train_state(state, (dir / "checkpoint.ckpt").string());
        if (m.violations != 0) throw DataError("generated parameters violated the constraint table");
      }
      return 0;
    }

    if (*export_video) {
      std::vector<Pose3D> seq;
      if (!dataset_path.empty()) {
        const LoadedDataset ds = load_dataset(dataset_path, topo);
        if (ds.records.empty()) throw InvalidArgument("dataset is empty");
        const long id = sequence >= 0 ? sequence : ds.records.front().sequence_id;
        std::vector<const DatasetRecord*> rs;
        for (const auto& r : ds.records) {
          if (r.sequence_id == id) rs.push_back(&r);
        }
        std::stable_sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->frame_index < b->frame_index; });
        for (const auto* r : rs) seq.push_back(r->pose3d);
      } else {
        cfg.mode = GenMode::video;
        if (frames <= 0) cfg.frames = 9;
        std::mt19937_64 rng(cfg.seed);
        const DhGenerator gen = checkpoint_path.empty() ? DhGenerator::create(cfg, topo, table, cam, rng)
                                                        : load_generator(checkpoint_path, topo, table, cam);
        if (gen.mode() != GenMode::video) throw InvalidArgument("checkpoint holds a single-frame generator");
        for (int attempt = 0; attempt < 1000 && seq.empty(); ++attempt) {
          const GeneratedBatch b = generate(gen, sample_latent(1, gen.z_dim(), rng));
          if (!b.rejected[0]) seq = b.poses3d;
        }
        if (seq.empty()) throw DataError("every generated sequence crossed z_min");
      }
      if (seq.empty()) throw InvalidArgument("no frames to export");
      export_skeleton_video(seq, topo, out_path);
      out << "wrote " << seq.size() << " frames to " << out_path << "\n";
      return 0;
    }

    if (*selftest) return run_selftest(out, dataset_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace dhaug
