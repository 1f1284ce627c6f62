#include "dhaug/gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dhaug/errors.hpp"
#include "dhaug/pose_ops.hpp"
#include "json.hpp"

namespace dhaug {

using nlohmann::json;

const char* mode_name(GenMode mode) { return mode == GenMode::video ? "video" : "single"; }

GenMode mode_from_name(const std::string& name) {
  if (name == "single" || name == "single-frame" || name == "single_frame") return GenMode::single_frame;
  if (name == "video") return GenMode::video;
  throw InvalidArgument("unknown mode '" + name + "' (expected single or video)");
}

// ---------------------------------------------------------------- config

void TrainConfig::check() const {
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw InvalidArgument(std::string("train config: ") + what + " must be positive");
  };
  if (!(alpha >= 0.0)) throw InvalidArgument("train config: alpha must be >= 0");
  if (beta_epoch < 0) throw InvalidArgument("train config: beta_epoch must be >= 0");
  positive(z_dim, "z_dim");
  positive(batch_single, "batch_single");
  positive(batch_video, "batch_video");
  positive(critic_steps, "critic_steps");
  positive(lr, "lr");
  positive(epochs, "epochs");
  positive(net.head_width, "head_width");
  for (int w : net.generator_hidden) positive(w, "generator_hidden");
  for (int w : net.encoder_hidden) positive(w, "encoder_hidden");
  if (net.encoder_hidden.empty()) throw InvalidArgument("train config: encoder_hidden is empty");
  if (mode == GenMode::video) {
    if (frames < 2) throw InvalidArgument("train config: video mode needs frames >= 2");
    if (beta_epoch > epochs) {
      throw InvalidArgument("train config: beta_epoch exceeds epochs, the motion critic would never run");
    }
  }
  for (const Bounds& b : ranges.bounds) {
    if (!std::isfinite(b.min) || !std::isfinite(b.max) || !(b.min < b.max)) {
      throw InvalidArgument("train config: global ranges need finite min < max");
    }
  }
}

TrainConfig train_config_from_json(const std::string& text, const std::string& origin) {
  static const std::set<std::string> known = {
      "alpha", "beta_epoch", "z_dim", "batch_single", "batch_video", "critic_steps", "lr", "epochs",
      "seed", "mode", "frames", "generator_hidden", "encoder_hidden", "head_width", "global_ranges"};
  TrainConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ParseError(origin, 0, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw ParseError(origin, 0, "unknown config key '" + key + "'");
    }
    c.alpha = j.value("alpha", c.alpha);
    c.beta_epoch = j.value("beta_epoch", c.beta_epoch);
    c.z_dim = j.value("z_dim", c.z_dim);
    c.batch_single = j.value("batch_single", c.batch_single);
    c.batch_video = j.value("batch_video", c.batch_video);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.frames = j.value("frames", c.frames);
    c.net.generator_hidden = j.value("generator_hidden", c.net.generator_hidden);
    c.net.encoder_hidden = j.value("encoder_hidden", c.net.encoder_hidden);
    c.net.head_width = j.value("head_width", c.net.head_width);
    if (j.contains("global_ranges")) {
      // rotations in degrees, translations in meters
      const char* names[kGlobalCount] = {"rx", "ry", "rz", "tx", "ty", "tz"};
      const json& r = j.at("global_ranges");
      for (int k = 0; k < kGlobalCount; ++k) {
        if (!r.contains(names[k])) continue;
        const auto v = r.at(names[k]).get<std::vector<double>>();
        if (v.size() != 2) throw ParseError(origin, 0, std::string("range ") + names[k] + " needs [min, max]");
        c.ranges.bounds[k] = k < 3 ? Bounds{deg_to_rad(v[0]), deg_to_rad(v[1])} : Bounds{v[0], v[1]};
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, e.what());
  }
  c.check();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json r;
  const char* names[kGlobalCount] = {"rx", "ry", "rz", "tx", "ty", "tz"};
  for (int k = 0; k < kGlobalCount; ++k) {
    const Bounds& b = c.ranges.bounds[k];
    r[names[k]] = k < 3 ? std::vector<double>{rad_to_deg(b.min), rad_to_deg(b.max)}
                        : std::vector<double>{b.min, b.max};
  }
  json j = {{"alpha", c.alpha},
            {"beta_epoch", c.beta_epoch},
            {"z_dim", c.z_dim},
            {"batch_single", c.batch_single},
            {"batch_video", c.batch_video},
            {"critic_steps", c.critic_steps},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"mode", mode_name(c.mode)},
            {"frames", c.frames},
            {"generator_hidden", c.net.generator_hidden},
            {"encoder_hidden", c.net.encoder_hidden},
            {"head_width", c.net.head_width},
            {"global_ranges", r}};
  return j.dump(1);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str(), path);
}

// ---------------------------------------------------------------- generator

int DhGenerator::raw_width(const SkeletonTopology& topology, GenMode mode, int frames) {
  if (mode == GenMode::single_frame) return topology.param_count() + kGlobalCount;
  return topology.length_param_count() + frames * (topology.angle_param_count() + kGlobalCount);
}

DhGenerator::DhGenerator(nn::Mlp net_, SkeletonTopology topology, ConstraintTable table,
                         CameraIntrinsics camera, GenMode mode, int frames, GlobalRanges ranges)
    : net(std::move(net_)),
      topology_(std::move(topology)),
      table_(std::move(table)),
      camera_(camera),
      ranges_(ranges),
      pairs_(adjacent_bone_pairs(topology_)),
      mode_(mode),
      frames_(frames) {
  camera_.check();
  if (mode_ == GenMode::video && frames_ < 2) throw InvalidArgument("video generator needs frames >= 2");
  if (static_cast<int>(table_.size()) != topology_.param_count()) {
    throw InvalidArgument("constraint table does not match the topology");
  }
  const int width = raw_width(topology_, mode_, frames_);
  if (net.out_dim() != width) {
    throw ShapeError("generator output width", 1, net.out_dim(), 1, width);
  }
  const int np = topology_.param_count();
  const int na = topology_.angle_param_count();
  const int nl = topology_.length_param_count();
  for (int t = 0; t < this->frames(); ++t) {
    for (int id = 0; id < np; ++id) {
      if (mode_ == GenMode::single_frame) {
        gather_.push_back(id);
      } else if (id < na) {
        gather_.push_back(nl + t * (na + kGlobalCount) + id);
      } else {
        gather_.push_back(id - na);
      }
    }
    for (int k = 0; k < kGlobalCount; ++k) {
      gather_.push_back(mode_ == GenMode::single_frame ? np + k : nl + t * (na + kGlobalCount) + na + k);
    }
  }
  lo_.resize(1, np + kGlobalCount);
  hi_.resize(1, np + kGlobalCount);
  for (int id = 0; id < np; ++id) {
    lo_(0, id) = table_[id].min;
    hi_(0, id) = table_[id].max;
  }
  for (int k = 0; k < kGlobalCount; ++k) {
    lo_(0, np + k) = ranges_.bounds[k].min;
    hi_(0, np + k) = ranges_.bounds[k].max;
  }
}

DhGenerator DhGenerator::create(const TrainConfig& config, const SkeletonTopology& topology,
                                const ConstraintTable& table, const CameraIntrinsics& camera,
                                std::mt19937_64& rng) {
  std::vector<int> dims = {config.z_dim};
  dims.insert(dims.end(), config.net.generator_hidden.begin(), config.net.generator_hidden.end());
  dims.push_back(raw_width(topology, config.mode, config.frames));
  return DhGenerator(nn::Mlp::create(dims, nn::Activation::tanh, nn::Activation::identity, rng), topology,
                     table, camera, config.mode, config.frames, config.ranges);
}

Tensor sample_latent(long count, int z_dim, std::mt19937_64& rng) {
  if (count <= 0 || z_dim <= 0) throw InvalidArgument("sample_latent: count and z_dim must be positive");
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor z(count, z_dim);
  for (long k = 0; k < z.size(); ++k) z.data()[k] = n(rng);
  return z;
}

GeneratedBatch generate(const DhGenerator& gen, const Tensor& z) {
  if (z.cols() != gen.z_dim()) throw ShapeError("generate latent", z.rows(), z.cols(), z.rows(), gen.z_dim());
  const Tensor raw = nn::mlp_forward(gen.net, z);
  const int np = gen.topology().param_count();
  const int per = np + kGlobalCount;
  const int frames = gen.frames();
  GeneratedBatch out;
  out.frames = frames;
  out.rejected.assign(z.rows(), 0);
  const auto& gather = gen.frame_gather();
  for (long s = 0; s < z.rows(); ++s) {
    for (int t = 0; t < frames; ++t) {
      ParamVector p;
      p.values.resize(np);
      std::array<double, kGlobalCount> g{};
      for (int k = 0; k < per; ++k) {
        const double v = squash_value(raw(s, gather[t * per + k]), {gen.lower()(0, k), gen.upper()(0, k)});
        if (k < np) {
          p[k] = v;
        } else {
          g[k - np] = v;
        }
      }
      const GlobalTransform gt = GlobalTransform::from_array(g);
      const Pose3D pose = forward_kinematics(gen.topology(), p, gt);
      Pose2D pose2d;
      try {
        pose2d = project_pose(pose, gen.camera());
      } catch (const DepthViolation&) {
        out.rejected[s] = 1;
      }
      out.params.push_back(std::move(p));
      out.globals.push_back(gt);
      out.poses3d.push_back(pose);
      out.poses2d.push_back(pose2d);
    }
  }
  return out;
}

int single_feature_width(const AdjacentBonePairs& pairs) {
  return 3 * kKeypointCount + static_cast<int>(pairs.size()) + 2 * kKeypointCount;
}

std::vector<int> motion_stream_widths(const AdjacentBonePairs& pairs, int frames) {
  const int p = static_cast<int>(pairs.size());
  return {frames * 3 * kKeypointCount, (frames - 1) * 3 * kKeypointCount, frames * p, (frames - 1) * p,
          frames * 2 * kKeypointCount, (frames - 1) * 2};
}

CriticBatch critic_features(Var pose3d, Var cosines, Var pose2d, int frames, bool with_motion,
                            int root_id) {
  CriticBatch out;
  out.single = ad::concat_cols({pose3d, cosines, pose2d});
  if (!with_motion) return out;
  if (frames < 2 || pose3d.rows() % frames != 0) {
    throw InvalidArgument("critic_features: rows do not split into sequences of " + std::to_string(frames));
  }
  const long n = pose3d.rows() / frames;
  const auto seq = [&](Var v) { return ad::reshape(v, n, frames * v.cols()); };
  const auto diff = [&](Var v) { return ad::reshape(ad::frame_diff(v, frames), n, (frames - 1) * v.cols()); };
  Var root = ad::take_cols(pose2d, {2 * root_id, 2 * root_id + 1});
  out.motion = ad::concat_cols({seq(pose3d), diff(pose3d), seq(cosines), diff(cosines), seq(pose2d), diff(root)});
  return out;
}

GeneratorOutput generator_forward(const DhGenerator& gen, const nn::BoundMlp& net, Var z) {
  ad::Tape& tape = *z.tape;
  Var raw = nn::mlp_forward(net, z);
  const int per = gen.topology().param_count() + kGlobalCount;
  const long rows = z.rows() * gen.frames();
  Var values = ad::squash(ad::reshape(ad::take_cols(raw, gen.frame_gather()), rows, per), gen.lower(), gen.upper());
  std::vector<int> pcols(gen.topology().param_count()), gcols(kGlobalCount);
  std::iota(pcols.begin(), pcols.end(), 0);
  std::iota(gcols.begin(), gcols.end(), gen.topology().param_count());
  GeneratorOutput out;
  out.params = ad::take_cols(values, pcols);
  out.globals = ad::take_cols(values, gcols);
  out.pose3d = fk_op(gen.topology(), out.params, out.globals);
  out.pose2d = project_op(out.pose3d, gen.camera(), true);
  out.cosines = cosine_op(out.pose3d, gen.pairs());
  out.features = critic_features(out.pose3d, out.cosines, out.pose2d, gen.frames(),
                                 gen.mode() == GenMode::video, gen.topology().root_keypoint());
  (void)tape;
  return out;
}

// ---------------------------------------------------------------- critics

StreamCritic StreamCritic::create(const std::vector<int>& widths, const NetConfig& net, std::mt19937_64& rng) {
  StreamCritic c;
  c.widths = widths;
  int fused = 0;
  for (int w : widths) {
    std::vector<int> dims = {w};
    dims.insert(dims.end(), net.encoder_hidden.begin(), net.encoder_hidden.end());
    c.encoders.push_back(nn::Mlp::create(dims, nn::Activation::leaky_relu, nn::Activation::leaky_relu, rng));
    fused += dims.back();
  }
  c.head = nn::Mlp::create({fused, net.head_width, 1}, nn::Activation::leaky_relu, nn::Activation::identity, rng);
  return c;
}

int StreamCritic::input_width() const { return std::accumulate(widths.begin(), widths.end(), 0); }

void StreamCritic::set_zero() {
  for (auto& e : encoders) e.set_zero();
  head.set_zero();
}

SingleFrameDiscriminator SingleFrameDiscriminator::create(const AdjacentBonePairs& pairs, const NetConfig& net,
                                                          std::mt19937_64& rng) {
  return {StreamCritic::create({3 * kKeypointCount, static_cast<int>(pairs.size()), 2 * kKeypointCount}, net, rng)};
}

MultiStreamMotionDiscriminator MultiStreamMotionDiscriminator::create(const AdjacentBonePairs& pairs, int frames,
                                                                      const NetConfig& net, std::mt19937_64& rng) {
  if (frames < 2) throw InvalidArgument("motion critic needs at least 2 frames");
  const std::vector<int> w = motion_stream_widths(pairs, frames);
  MultiStreamMotionDiscriminator d;
  d.frames = frames;
  for (int b = 0; b < 3; ++b) d.branches[b] = StreamCritic::create({w[2 * b], w[2 * b + 1]}, net, rng);
  return d;
}

int MultiStreamMotionDiscriminator::input_width() const {
  int w = 0;
  for (const auto& b : branches) w += b.input_width();
  return w;
}

void MultiStreamMotionDiscriminator::set_zero() {
  for (auto& b : branches) b.set_zero();
}

BoundStreamCritic bind(ad::Tape& tape, const StreamCritic& critic, bool requires_grad) {
  BoundStreamCritic b;
  b.widths = critic.widths;
  for (const auto& e : critic.encoders) b.encoders.push_back(nn::bind(tape, e, requires_grad));
  b.head = nn::bind(tape, critic.head, requires_grad);
  return b;
}

BoundMotionCritic bind(ad::Tape& tape, const MultiStreamMotionDiscriminator& critic, bool requires_grad) {
  BoundMotionCritic b;
  for (int k = 0; k < 3; ++k) b.branches[k] = bind(tape, critic.branches[k], requires_grad);
  return b;
}

namespace {

std::vector<int> col_range(int start, int count) {
  std::vector<int> v(count);
  std::iota(v.begin(), v.end(), start);
  return v;
}

int total_width(const std::vector<int>& widths) { return std::accumulate(widths.begin(), widths.end(), 0); }

}  // namespace

Var critic_forward(const BoundStreamCritic& critic, Var x, CriticTrace* trace) {
  const int width = total_width(critic.widths);
  if (x.cols() != width) throw ShapeError("critic input", x.rows(), x.cols(), x.rows(), width);
  std::vector<Var> encoded;
  int off = 0;
  for (std::size_t k = 0; k < critic.encoders.size(); ++k) {
    Var part = ad::take_cols(x, col_range(off, critic.widths[k]));
    nn::MlpTrace* t = nullptr;
    if (trace) {
      trace->encoders.emplace_back();
      t = &trace->encoders.back();
    }
    encoded.push_back(nn::mlp_forward(critic.encoders[k], part, t));
    off += critic.widths[k];
  }
  return nn::mlp_forward(critic.head, ad::concat_cols(encoded), trace ? &trace->head : nullptr);
}

Var critic_forward(const BoundMotionCritic& critic, Var x, MotionTrace* trace) {
  int width = 0;
  for (const auto& b : critic.branches) width += total_width(b.widths);
  if (x.cols() != width) throw ShapeError("motion critic input", x.rows(), x.cols(), x.rows(), width);
  std::optional<Var> score;
  int off = 0;
  for (int k = 0; k < 3; ++k) {
    const int w = total_width(critic.branches[k].widths);
    Var s = critic_forward(critic.branches[k], ad::take_cols(x, col_range(off, w)),
                           trace ? &trace->branches[k] : nullptr);
    score = score ? ad::add(*score, s) : s;
    off += w;
  }
  return *score;
}

Var critic_input_gradient(const BoundStreamCritic& critic, const CriticTrace& trace) {
  Var g_head = nn::input_gradient(critic.head, trace.head);
  std::vector<Var> parts;
  int off = 0;
  for (std::size_t k = 0; k < critic.encoders.size(); ++k) {
    const int w = static_cast<int>(critic.encoders[k].layers.back().weight.cols());
    Var up = ad::take_cols(g_head, col_range(off, w));
    parts.push_back(nn::mlp_vjp(critic.encoders[k], trace.encoders[k], up));
    off += w;
  }
  return ad::concat_cols(parts);
}

Var critic_input_gradient(const BoundMotionCritic& critic, const MotionTrace& trace) {
  std::vector<Var> parts;
  for (int k = 0; k < 3; ++k) parts.push_back(critic_input_gradient(critic.branches[k], trace.branches[k]));
  return ad::concat_cols(parts);
}

std::vector<Tensor> gradients(const BoundStreamCritic& critic) {
  std::vector<Tensor> out;
  for (const auto& e : critic.encoders) {
    for (Tensor& g : nn::gradients(e)) out.push_back(std::move(g));
  }
  for (Tensor& g : nn::gradients(critic.head)) out.push_back(std::move(g));
  return out;
}

std::vector<Tensor> gradients(const BoundMotionCritic& critic) {
  std::vector<Tensor> out;
  for (const auto& b : critic.branches) {
    for (Tensor& g : gradients(b)) out.push_back(std::move(g));
  }
  return out;
}

std::vector<Tensor*> parameters(StreamCritic& critic) {
  std::vector<Tensor*> out;
  for (auto& e : critic.encoders) {
    for (Tensor* p : e.parameters()) out.push_back(p);
  }
  for (Tensor* p : critic.head.parameters()) out.push_back(p);
  return out;
}

std::vector<Tensor*> parameters(MultiStreamMotionDiscriminator& critic) {
  std::vector<Tensor*> out;
  for (auto& b : critic.branches) {
    for (Tensor* p : parameters(b)) out.push_back(p);
  }
  return out;
}

Tensor discriminate_single(const SingleFrameDiscriminator& d, const Tensor& features) {
  ad::Tape tape;
  return critic_forward(bind(tape, d.critic, false), tape.constant(features)).value();
}

Tensor discriminate_motion(const MultiStreamMotionDiscriminator& d, const Tensor& features) {
  ad::Tape tape;
  return critic_forward(bind(tape, d, false), tape.constant(features)).value();
}

Tensor motion_branch_scores(const MultiStreamMotionDiscriminator& d, const Tensor& features) {
  ad::Tape tape;
  const BoundMotionCritic b = bind(tape, d, false);
  Var x = tape.constant(features);
  if (features.cols() != d.input_width()) {
    throw ShapeError("motion critic input", features.rows(), features.cols(), features.rows(), d.input_width());
  }
  Tensor out(features.rows(), 3);
  int off = 0;
  for (int k = 0; k < 3; ++k) {
    const int w = d.branches[k].input_width();
    out.col(k) = critic_forward(b.branches[k], ad::take_cols(x, col_range(off, w))).value().col(0);
    off += w;
  }
  return out;
}

namespace {

/// Rows of poses in camera coordinates, normalized 2D and cosines on a tape.
struct CoordRows {
  Tensor pose3d, pose2d, cosines;
};

CoordRows coordinate_rows(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs) {
  const long n = static_cast<long>(pairs.size());
  CoordRows r;
  r.pose3d.resize(n, 3 * kKeypointCount);
  r.pose2d.resize(n, 2 * kKeypointCount);
  r.cosines.resize(n, static_cast<long>(bone_pairs.size()));
  for (long i = 0; i < n; ++i) {
    const PosePair& p = pairs[i];
    pose_to_row(p.pose3d, r.pose3d.row(i).data());
    for (int j = 0; j < kKeypointCount; ++j) {
      r.pose2d(i, 2 * j) = (p.pose2d.joints[j].x() - p.camera.cx) / p.camera.fx;
      r.pose2d(i, 2 * j + 1) = (p.pose2d.joints[j].y() - p.camera.cy) / p.camera.fy;
    }
    const std::vector<double> c = joint_cosines(p.pose3d, bone_pairs);
    for (std::size_t k = 0; k < c.size(); ++k) r.cosines(i, static_cast<long>(k)) = c[k];
  }
  return r;
}

}  // namespace

Tensor single_features(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs) {
  if (pairs.empty()) throw InvalidArgument("single_features: no poses");
  const CoordRows r = coordinate_rows(pairs, bone_pairs);
  ad::Tape tape;
  return critic_features(tape.constant(r.pose3d), tape.constant(r.cosines), tape.constant(r.pose2d), 1, false, 0)
      .single.value();
}

Tensor motion_features(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs, int frames,
                       int root_id) {
  if (pairs.empty()) throw InvalidArgument("motion_features: no poses");
  const CoordRows r = coordinate_rows(pairs, bone_pairs);
  ad::Tape tape;
  return critic_features(tape.constant(r.pose3d), tape.constant(r.cosines), tape.constant(r.pose2d), frames, true,
                         root_id)
      .motion->value();
}

// ---------------------------------------------------------------- losses

int gamma_schedule(int epoch, int beta_epoch) {
  if (epoch < 0) throw InvalidArgument("gamma_schedule: epoch must be >= 0");
  return epoch >= beta_epoch ? 1 : 0;
}

namespace {

Var interpolate(Var real, Var fake, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor eps(real.rows(), 1);
  for (long r = 0; r < eps.rows(); ++r) eps(r, 0) = u(rng);
  ad::Tape& tape = *real.tape;
  Tensor one_minus = (1.0 - eps.array()).matrix();
  return ad::add(ad::mul(tape.constant(eps), real), ad::mul(tape.constant(one_minus), fake));
}

void check_same(Var a, Var b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(what, a.rows(), a.cols(), b.rows(), b.cols());
}

}  // namespace

Var critic_loss(const BoundStreamCritic& ds, const BoundMotionCritic* dm, const CriticBatch& real,
                const CriticBatch& fake, double alpha, int gamma, std::mt19937_64& rng, LossTerms* terms) {
  check_same(real.single, fake.single, "critic_loss single-frame batches");
  Var fs = ad::mean(critic_forward(ds, fake.single));
  Var rs = ad::mean(critic_forward(ds, real.single));
  CriticTrace trace;
  critic_forward(ds, interpolate(real.single, fake.single, rng), &trace);
  Var gp = nn::gradient_penalty(critic_input_gradient(ds, trace), alpha);
  Var loss = ad::add(ad::sub(fs, rs), gp);
  LossTerms t;
  t.ds_fake = fs.value()(0, 0);
  t.ds_real = rs.value()(0, 0);
  t.penalty_s = gp.value()(0, 0);
  if (gamma != 0) {
    if (!dm || !real.motion || !fake.motion) throw InvalidArgument("critic_loss: motion terms need a motion critic");
    check_same(*real.motion, *fake.motion, "critic_loss motion batches");
    Var fm = ad::mean(critic_forward(*dm, *fake.motion));
    Var rm = ad::mean(critic_forward(*dm, *real.motion));
    MotionTrace mtrace;
    critic_forward(*dm, interpolate(*real.motion, *fake.motion, rng), &mtrace);
    Var gpm = nn::gradient_penalty(critic_input_gradient(*dm, mtrace), alpha);
    loss = ad::add(loss, ad::scale(ad::add(ad::sub(fm, rm), gpm), gamma));
    t.dm_fake = fm.value()(0, 0);
    t.dm_real = rm.value()(0, 0);
    t.penalty_m = gpm.value()(0, 0);
  }
  if (terms) *terms = t;
  return loss;
}

Var generator_loss(const BoundStreamCritic& ds, const BoundMotionCritic* dm, const CriticBatch& fake, int gamma) {
  Var loss = ad::neg(ad::mean(critic_forward(ds, fake.single)));
  if (gamma != 0) {
    if (!dm || !fake.motion) throw InvalidArgument("generator_loss: motion term needs a motion critic");
    loss = ad::sub(loss, ad::scale(ad::mean(critic_forward(*dm, *fake.motion)), gamma));
  }
  return loss;
}

// ---------------------------------------------------------------- training

RealCorpus make_real_corpus(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs, GenMode mode,
                            int frames, int root_id) {
  if (pairs.empty()) throw InvalidArgument("real corpus is empty");
  RealCorpus c;
  c.pairs = static_cast<long>(pairs.size());
  c.frames = mode == GenMode::video ? frames : 1;
  if (c.pairs % c.frames != 0) {
    throw InvalidArgument("real corpus of " + std::to_string(c.pairs) + " poses does not split into sequences of " +
                          std::to_string(c.frames));
  }
  c.single = single_features(pairs, bone_pairs);
  if (mode == GenMode::video) c.motion = motion_features(pairs, bone_pairs, frames, root_id);
  return c;
}

TrainState make_train_state(const TrainConfig& config, const SkeletonTopology& topology, const ConstraintTable& table,
                            const CameraIntrinsics& camera) {
  config.check();
  std::mt19937_64 rng(config.seed);
  DhGenerator gen = DhGenerator::create(config, topology, table, camera, rng);
  SingleFrameDiscriminator ds = SingleFrameDiscriminator::create(gen.pairs(), config.net, rng);
  std::optional<MultiStreamMotionDiscriminator> dm;
  if (config.mode == GenMode::video) {
    dm = MultiStreamMotionDiscriminator::create(gen.pairs(), config.frames, config.net, rng);
  }
  TrainState s{config, std::move(gen), std::move(ds), std::move(dm), {}, {}, {}, std::move(rng)};
  for (nn::AdamState* a : {&s.adam_gen, &s.adam_ds, &s.adam_dm}) a->lr = config.lr;
  return s;
}

namespace {

void check_finite(double v, const TrainState& s, const char* what, const LossTerms& t) {
  if (std::isfinite(v)) return;
  std::ostringstream msg;
  msg << what << " is not finite at epoch " << s.epoch << ", critic iteration " << s.critic_iterations
      << " (Ds fake " << t.ds_fake << ", Ds real " << t.ds_real << ", GP " << t.penalty_s << ", Dm fake "
      << t.dm_fake << ", Dm real " << t.dm_real << ", GPm " << t.penalty_m << ")";
  throw TrainingDiverged(msg.str());
}

}  // namespace

StepMetrics critic_step(TrainState& state, const RealCorpus& real, const std::vector<int>& index) {
  if (index.empty()) throw InvalidArgument("critic_step: empty batch");
  const int frames = real.frames;
  const bool video = state.config.mode == GenMode::video;
  if (video != (frames > 1)) throw InvalidArgument("critic_step: corpus mode does not match the generator");
  const int gamma = video ? gamma_schedule(state.epoch, state.config.beta_epoch) : 0;
  const long count = static_cast<long>(index.size());

  ad::Tape tape;
  std::vector<int> frame_rows;
  for (int i : index) {
    for (int t = 0; t < frames; ++t) frame_rows.push_back(i * frames + t);
  }
  Var all_single = tape.constant(real.single);
  CriticBatch rb{ad::take_rows(all_single, frame_rows), std::nullopt};
  if (video) rb.motion = ad::take_rows(tape.constant(real.motion), index);

  const Tensor z = sample_latent(count, state.generator.z_dim(), state.rng);
  const nn::BoundMlp gnet = nn::bind(tape, state.generator.net, false);
  const GeneratorOutput fake = generator_forward(state.generator, gnet, tape.constant(z));

  const BoundStreamCritic ds = bind(tape, state.ds.critic, true);
  std::optional<BoundMotionCritic> dm;
  if (video && gamma) dm = bind(tape, *state.dm, true);

  StepMetrics m;
  Var loss = critic_loss(ds, dm ? &*dm : nullptr, rb, fake.features, state.config.alpha, gamma, state.rng, &m.terms);
  m.loss = loss.value()(0, 0);
  check_finite(m.loss, state, "critic loss", m.terms);
  tape.backward(loss);
  nn::adam_step(state.adam_ds, parameters(state.ds.critic), gradients(ds));
  if (dm) nn::adam_step(state.adam_dm, parameters(*state.dm), gradients(*dm));
  ++state.critic_iterations;
  return m;
}

double generator_step(TrainState& state, long count) {
  const bool video = state.config.mode == GenMode::video;
  const int gamma = video ? gamma_schedule(state.epoch, state.config.beta_epoch) : 0;
  ad::Tape tape;
  const Tensor z = sample_latent(count, state.generator.z_dim(), state.rng);
  const nn::BoundMlp gnet = nn::bind(tape, state.generator.net, true);
  const GeneratorOutput fake = generator_forward(state.generator, gnet, tape.constant(z));
  const BoundStreamCritic ds = bind(tape, state.ds.critic, false);
  std::optional<BoundMotionCritic> dm;
  if (video && gamma) dm = bind(tape, *state.dm, false);
  Var loss = generator_loss(ds, dm ? &*dm : nullptr, fake.features, gamma);
  const double v = loss.value()(0, 0);
  check_finite(v, state, "generator loss", {});
  tape.backward(loss);
  nn::adam_step(state.adam_gen, state.generator.net.parameters(), nn::gradients(gnet));
  ++state.generator_iterations;
  return v;
}

namespace {

GeneratedBatch keep_accepted(const GeneratedBatch& b, long limit) {
  GeneratedBatch out;
  out.frames = b.frames;
  for (long s = 0; s < b.sequences() && out.sequences() < limit; ++s) {
    if (b.rejected[s]) continue;
    out.rejected.push_back(0);
    for (int t = 0; t < b.frames; ++t) {
      const long i = s * b.frames + t;
      out.params.push_back(b.params[i]);
      out.globals.push_back(b.globals[i]);
      out.poses3d.push_back(b.poses3d[i]);
      out.poses2d.push_back(b.poses2d[i]);
    }
  }
  return out;
}

}  // namespace

EpochMetrics train_epoch(TrainState& state, const RealCorpus& real, const BatchSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  if (real.items() == 0) throw InvalidArgument("train_epoch: real data is empty");
  const TrainConfig& cfg = state.config;
  EpochMetrics m;
  m.epoch = state.epoch;
  m.gamma = cfg.mode == GenMode::video ? gamma_schedule(state.epoch, cfg.beta_epoch) : 0;

  std::vector<int> perm(real.items());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), state.rng);
  const long batch = cfg.batch();
  const long iterations = (real.items() + batch - 1) / batch;
  for (long it = 0; it < iterations; ++it) {
    const long begin = it * batch;
    const long end = std::min<long>(begin + batch, real.items());
    const std::vector<int> index(perm.begin() + begin, perm.begin() + end);
    const StepMetrics s = critic_step(state, real, index);
    m.ds_real += s.terms.ds_real;
    m.ds_fake += s.terms.ds_fake;
    m.penalty_s += s.terms.penalty_s;
    m.motion_term += m.gamma * (s.terms.dm_fake - s.terms.dm_real + s.terms.penalty_m);
    m.penalty_m += s.terms.penalty_m;
    ++m.critic_steps;
    if (state.critic_iterations % cfg.critic_steps == 0) {
      m.generator_loss += generator_step(state, end - begin);
      ++m.generator_steps;
    }
  }
  const double n = static_cast<double>(m.critic_steps);
  m.ds_real /= n;
  m.ds_fake /= n;
  m.penalty_s /= n;
  m.motion_term /= n;
  m.penalty_m /= n;
  m.wasserstein = m.ds_real - m.ds_fake;
  if (m.generator_steps > 0) m.generator_loss /= static_cast<double>(m.generator_steps);

  // synthesize as many pairs as the real corpus holds
  const long wanted = real.pairs / real.frames;
  long made = 0;
  while (made < wanted) {
    const long count = std::min<long>(batch, wanted - made);
    const GeneratedBatch b = keep_accepted(generate(state.generator, sample_latent(count, state.generator.z_dim(), state.rng)), count);
    for (const ParamVector& p : b.params) {
      m.violations += static_cast<long>(validate_params(p, state.generator.table()).violations.size());
    }
    made += b.sequences();
    m.synthesized += static_cast<long>(b.poses3d.size());
    if (sink && b.sequences() > 0) sink(b);
  }
  ++state.epoch;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

std::string epoch_metrics_to_json(const EpochMetrics& m) {
  json j = {{"epoch", m.epoch},
            {"gamma", m.gamma},
            {"ds_real", m.ds_real},
            {"ds_fake", m.ds_fake},
            {"wasserstein", m.wasserstein},
            {"penalty_s", m.penalty_s},
            {"motion_term", m.motion_term},
            {"penalty_m", m.penalty_m},
            {"generator_loss", m.generator_loss},
            {"critic_steps", m.critic_steps},
            {"generator_steps", m.generator_steps},
            {"synthesized", m.synthesized},
            {"violations", m.violations},
            {"seconds", m.seconds}};
  return j.dump();
}

// ---------------------------------------------------------------- stand-in data

BandCorpus narrow_band_corpus(const SkeletonTopology& topology, const ConstraintTable& table,
                              const CameraIntrinsics& camera, long count, int frames, std::uint64_t seed,
                              double band) {
  if (count <= 0 || frames <= 0) throw InvalidArgument("narrow_band_corpus: count and frames must be positive");
  if (!(band > 0.0 && band <= 1.0)) throw InvalidArgument("narrow_band_corpus: band must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int np = topology.param_count();
  const auto draw_params = [&] {
    ParamVector p;
    p.values.resize(np);
    for (int id = 0; id < np; ++id) p[id] = table[id].mid() + u(rng) * band * (table[id].max - table[id].min) / 2.0;
    return p;
  };
  const auto draw_global = [&] {
    const double rot = band * 3.141592653589793;
    return GlobalTransform{u(rng) * rot, u(rng) * rot, u(rng) * rot, u(rng) * band, u(rng) * band, 5.0 + u(rng) * band};
  };
  const auto lerp = [](double a, double b, double s) { return a + (b - a) * s; };
  BandCorpus out;
  for (long s = 0; s < count; ++s) {
    const ParamVector pa = draw_params();
    const ParamVector pb = frames > 1 ? draw_params() : pa;
    const GlobalTransform ga = draw_global();
    const GlobalTransform gb = frames > 1 ? draw_global() : ga;
    for (int t = 0; t < frames; ++t) {
      const double w = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
      ParamVector p = pa;
      for (int id = 0; id < topology.angle_param_count(); ++id) p[id] = lerp(pa[id], pb[id], w);
      const auto a = ga.to_array(), b = gb.to_array();
      std::array<double, kGlobalCount> g{};
      for (int k = 0; k < kGlobalCount; ++k) g[k] = lerp(a[k], b[k], w);
      const GlobalTransform gt = GlobalTransform::from_array(g);
      const Pose3D pose = forward_kinematics(topology, p, gt);
      out.pairs.push_back({pose, project_pose(pose, camera), camera});
      out.params.push_back(std::move(p));
      out.globals.push_back(gt);
    }
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

void add_critic(nn::Checkpoint& ckpt, const std::string& prefix, const StreamCritic& c) {
  for (std::size_t k = 0; k < c.encoders.size(); ++k) ckpt.nets[prefix + ".enc" + std::to_string(k)] = c.encoders[k];
  ckpt.nets[prefix + ".head"] = c.head;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

}  // namespace

void save_train_state(const TrainState& state, const std::string& path) {
  nn::Checkpoint ckpt;
  ckpt.nets["generator"] = state.generator.net;
  add_critic(ckpt, "ds", state.ds.critic);
  if (state.dm) {
    for (int b = 0; b < 3; ++b) add_critic(ckpt, "dm.b" + std::to_string(b), state.dm->branches[b]);
  }
  json meta = {{"config", json::parse(train_config_to_json(state.config))},
               {"epoch", state.epoch},
               {"topology", hex(state.generator.topology().hash())}};
  ckpt.meta_json = meta.dump();
  nn::save_checkpoint(ckpt, path);
}

DhGenerator load_generator(const std::string& path, const SkeletonTopology& topology, const ConstraintTable& table,
                           const CameraIntrinsics& camera) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  TrainConfig cfg;
  try {
    const json meta = json::parse(ckpt.meta_json);
    if (meta.value("topology", std::string()) != hex(topology.hash())) {
      throw InvalidArgument("checkpoint " + path + " was trained on a different topology");
    }
    cfg = train_config_from_json(meta.at("config").dump(), path);
  } catch (const json::exception& e) {
    throw ParseError(path, 2, e.what());
  }
  auto it = ckpt.nets.find("generator");
  if (it == ckpt.nets.end()) throw ParseError(path, 2, "checkpoint has no generator");
  return DhGenerator(std::move(it->second), topology, table, camera, cfg.mode, cfg.frames, cfg.ranges);
}

}  // namespace dhaug
