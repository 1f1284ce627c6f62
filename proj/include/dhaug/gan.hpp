#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dhaug/autodiff.hpp"
#include "dhaug/camera.hpp"
#include "dhaug/constraint.hpp"
#include "dhaug/features.hpp"
#include "dhaug/nn.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug {

using ad::Tensor;
using ad::Var;

enum class GenMode { single_frame, video };

const char* mode_name(GenMode mode);
GenMode mode_from_name(const std::string& name);

/// Ranges of the six global values, squashed like the joint parameters.
struct GlobalRanges {
  std::array<Bounds, kGlobalCount> bounds = {{{-3.141592653589793, 3.141592653589793},
                                              {-3.141592653589793, 3.141592653589793},
                                              {-3.141592653589793, 3.141592653589793},
                                              {-1.0, 1.0},
                                              {-0.5, 0.5},
                                              {4.0, 7.0}}};
};

struct NetConfig {
  std::vector<int> generator_hidden = {512, 512};
  std::vector<int> encoder_hidden = {256, 256};
  int head_width = 128;
};

struct TrainConfig {
  double alpha = 10.0;
  int beta_epoch = 4;
  int z_dim = 128;
  int batch_single = 1024;
  int batch_video = 512;
  int critic_steps = 5;
  double lr = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 0;
  GenMode mode = GenMode::single_frame;
  int frames = 9;
  NetConfig net;
  GlobalRanges ranges;

  /// Throws InvalidArgument on a non-positive field, or when the motion
  /// critic would never switch on (beta_epoch > epochs in video mode).
  void check() const;
  int batch() const { return mode == GenMode::video ? batch_video : batch_single; }
  int frame_count() const { return mode == GenMode::video ? frames : 1; }
};

TrainConfig train_config_from_json(const std::string& text, const std::string& origin = "<string>");
std::string train_config_to_json(const TrainConfig& config);
TrainConfig load_train_config(const std::string& path);

/// Fully connected net followed by the squash layer, DH forward kinematics
/// and projection.
class DhGenerator {
 public:
  DhGenerator(nn::Mlp net, SkeletonTopology topology, ConstraintTable table, CameraIntrinsics camera,
              GenMode mode, int frames, GlobalRanges ranges = {});

  static DhGenerator create(const TrainConfig& config, const SkeletonTopology& topology,
                            const ConstraintTable& table, const CameraIntrinsics& camera,
                            std::mt19937_64& rng);

  /// 48 + 6 in single-frame mode, lengths + frames * (angles + 6) in video mode.
  static int raw_width(const SkeletonTopology& topology, GenMode mode, int frames);

  nn::Mlp net;

  const SkeletonTopology& topology() const { return topology_; }
  const ConstraintTable& table() const { return table_; }
  const CameraIntrinsics& camera() const { return camera_; }
  const GlobalRanges& ranges() const { return ranges_; }
  const AdjacentBonePairs& pairs() const { return pairs_; }
  GenMode mode() const { return mode_; }
  /// 1 in single-frame mode.
  int frames() const { return mode_ == GenMode::video ? frames_ : 1; }
  int z_dim() const { return net.in_dim(); }

  /// For each frame, the raw-output column feeding each of the 54 per-frame
  /// values (48 parameters in id order, then 6 globals).
  const std::vector<int>& frame_gather() const { return gather_; }
  /// Lower/upper bounds of the 54 per-frame values.
  const Tensor& lower() const { return lo_; }
  const Tensor& upper() const { return hi_; }

 private:
  SkeletonTopology topology_;
  ConstraintTable table_;
  CameraIntrinsics camera_;
  GlobalRanges ranges_;
  AdjacentBonePairs pairs_;
  GenMode mode_;
  int frames_;
  std::vector<int> gather_;
  Tensor lo_, hi_;
};

/// Standard normal entries, count x z_dim.
Tensor sample_latent(long count, int z_dim, std::mt19937_64& rng);

/// Output of the plain (non-graph) generator path. Frames are stored
/// sequence-major: entry s * frames + t.
struct GeneratedBatch {
  int frames = 1;
  std::vector<ParamVector> params;
  std::vector<GlobalTransform> globals;
  std::vector<Pose3D> poses3d;
  std::vector<Pose2D> poses2d;
  /// Per sequence: some frame put a joint in front of z_min. Its 2D poses are
  /// left zero.
  std::vector<char> rejected;

  long sequences() const { return static_cast<long>(rejected.size()); }
};

GeneratedBatch generate(const DhGenerator& gen, const Tensor& z);

/// Critic inputs for a batch, built from graph ops.
struct CriticBatch {
  Var single;                 // frames x single_width
  std::optional<Var> motion;  // sequences x motion_width (video mode)
};

/// Graph path of the generator for training. Throws DepthViolation when a
/// generated joint crosses z_min.
struct GeneratorOutput {
  Var params;
  Var globals;
  Var pose3d;
  Var pose2d;  // normalized image coordinates
  Var cosines;
  CriticBatch features;
};
GeneratorOutput generator_forward(const DhGenerator& gen, const nn::BoundMlp& net, Var z);

/// [3D pose | cosines | normalized 2D] width.
int single_feature_width(const AdjacentBonePairs& pairs);
/// Stream widths of the motion critic, in input order.
std::vector<int> motion_stream_widths(const AdjacentBonePairs& pairs, int frames);

/// Critic features from coordinates. pose3d is frames x 48, pose2d frames x 32
/// in normalized image coordinates.
CriticBatch critic_features(Var pose3d, Var cosines, Var pose2d, int frames, bool with_motion,
                            int root_id);

/// Encoders over contiguous column groups, concatenated into a head.
struct StreamCritic {
  std::vector<int> widths;
  std::vector<nn::Mlp> encoders;
  nn::Mlp head;

  static StreamCritic create(const std::vector<int>& widths, const NetConfig& net, std::mt19937_64& rng);
  int input_width() const;
  void set_zero();
};

struct BoundStreamCritic {
  std::vector<int> widths;
  std::vector<nn::BoundMlp> encoders;
  nn::BoundMlp head;
};

struct CriticTrace {
  std::vector<nn::MlpTrace> encoders;
  nn::MlpTrace head;
};

/// Three encoders (3D pose, cosines, 2D pose) and a fusion head.
struct SingleFrameDiscriminator {
  StreamCritic critic;
  static SingleFrameDiscriminator create(const AdjacentBonePairs& pairs, const NetConfig& net,
                                         std::mt19937_64& rng);
};

/// Three two-stream branches (3D, cosines, 2D); the score is the branch sum.
struct MultiStreamMotionDiscriminator {
  int frames = 9;
  std::array<StreamCritic, 3> branches;
  static MultiStreamMotionDiscriminator create(const AdjacentBonePairs& pairs, int frames,
                                               const NetConfig& net, std::mt19937_64& rng);
  int input_width() const;
  void set_zero();
};

struct BoundMotionCritic {
  std::array<BoundStreamCritic, 3> branches;
};
struct MotionTrace {
  std::array<CriticTrace, 3> branches;
};

BoundStreamCritic bind(ad::Tape& tape, const StreamCritic& critic, bool requires_grad = true);
BoundMotionCritic bind(ad::Tape& tape, const MultiStreamMotionDiscriminator& critic,
                       bool requires_grad = true);

/// rows x 1 scores.
Var critic_forward(const BoundStreamCritic& critic, Var x, CriticTrace* trace = nullptr);
Var critic_forward(const BoundMotionCritic& critic, Var x, MotionTrace* trace = nullptr);
Var critic_input_gradient(const BoundStreamCritic& critic, const CriticTrace& trace);
Var critic_input_gradient(const BoundMotionCritic& critic, const MotionTrace& trace);

std::vector<Tensor> gradients(const BoundStreamCritic& critic);
std::vector<Tensor> gradients(const BoundMotionCritic& critic);
std::vector<Tensor*> parameters(StreamCritic& critic);
std::vector<Tensor*> parameters(MultiStreamMotionDiscriminator& critic);

/// Plain evaluation, one score per row.
Tensor discriminate_single(const SingleFrameDiscriminator& d, const Tensor& features);
Tensor discriminate_motion(const MultiStreamMotionDiscriminator& d, const Tensor& features);
/// Per-branch scores of the motion critic, rows x 3.
Tensor motion_branch_scores(const MultiStreamMotionDiscriminator& d, const Tensor& features);

/// Feature rows from coordinates, matching what the generator feeds the critics.
struct PosePair {
  Pose3D pose3d;
  Pose2D pose2d;  // pixels
  CameraIntrinsics camera;
};
Tensor single_features(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs);
/// `pairs` holds whole sequences of `frames` consecutive entries.
Tensor motion_features(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs,
                       int frames, int root_id);

/// 1 iff epoch >= beta_epoch.
int gamma_schedule(int epoch, int beta_epoch);

struct LossTerms {
  double ds_fake = 0.0;
  double ds_real = 0.0;
  double penalty_s = 0.0;
  double dm_fake = 0.0;
  double dm_real = 0.0;
  double penalty_m = 0.0;
};

/// E[Ds(fake)] - E[Ds(real)] + alpha GP_s + gamma (E[Dm(fake)] - E[Dm(real)] + alpha GP_m).
/// Interpolates per row with eps ~ U[0, 1] drawn from `rng`. The motion
/// critic is untouched when gamma is 0.
Var critic_loss(const BoundStreamCritic& ds, const BoundMotionCritic* dm, const CriticBatch& real,
                const CriticBatch& fake, double alpha, int gamma, std::mt19937_64& rng,
                LossTerms* terms = nullptr);

/// -E[Ds(fake)] - gamma E[Dm(fake)].
Var generator_loss(const BoundStreamCritic& ds, const BoundMotionCritic* dm, const CriticBatch& fake,
                   int gamma);

/// Real feature rows used by training, sliced by batch.
struct RealCorpus {
  Tensor single;  // frames x single width
  Tensor motion;  // sequences x motion width, empty in single-frame mode
  long pairs = 0;
  int frames = 1;

  /// Number of batch items: frames in single-frame mode, sequences otherwise.
  long items() const { return frames > 1 ? motion.rows() : single.rows(); }
};
RealCorpus make_real_corpus(const std::vector<PosePair>& pairs, const AdjacentBonePairs& bone_pairs,
                            GenMode mode, int frames, int root_id);

struct TrainState {
  TrainConfig config;
  DhGenerator generator;
  SingleFrameDiscriminator ds;
  std::optional<MultiStreamMotionDiscriminator> dm;
  nn::AdamState adam_gen;
  nn::AdamState adam_ds;
  nn::AdamState adam_dm;
  std::mt19937_64 rng;
  int epoch = 0;
  long critic_iterations = 0;
  long generator_iterations = 0;
};

TrainState make_train_state(const TrainConfig& config, const SkeletonTopology& topology,
                            const ConstraintTable& table, const CameraIntrinsics& camera);

struct StepMetrics {
  LossTerms terms;
  double loss = 0.0;
};

/// One critic update on `count` real items starting at rows `index`.
StepMetrics critic_step(TrainState& state, const RealCorpus& real, const std::vector<int>& index);
/// One generator update on a fresh batch of `count` items.
double generator_step(TrainState& state, long count);

struct EpochMetrics {
  int epoch = 0;
  int gamma = 0;
  double ds_real = 0.0;
  double ds_fake = 0.0;
  double wasserstein = 0.0;  // E[Ds(real)] - E[Ds(fake)]
  double penalty_s = 0.0;
  double motion_term = 0.0;  // gamma-gated Dm contribution to the critic loss
  double penalty_m = 0.0;
  double generator_loss = 0.0;
  long critic_steps = 0;
  long generator_steps = 0;
  long synthesized = 0;
  long violations = 0;
  double seconds = 0.0;
};

std::string epoch_metrics_to_json(const EpochMetrics& m);

using BatchSink = std::function<void(const GeneratedBatch&)>;

/// One pass over the real corpus, then `real.pairs` freshly generated pairs
/// handed to `sink` in batches.
EpochMetrics train_epoch(TrainState& state, const RealCorpus& real, const BatchSink& sink = {});

/// Poses drawn from a narrow band around the middle of every admissible range,
/// facing the camera. Video sequences interpolate between two band samples.
struct BandCorpus {
  std::vector<PosePair> pairs;
  std::vector<ParamVector> params;
  std::vector<GlobalTransform> globals;
};
BandCorpus narrow_band_corpus(const SkeletonTopology& topology, const ConstraintTable& table,
                              const CameraIntrinsics& camera, long count, int frames,
                              std::uint64_t seed, double band = 0.05);

/// Saves generator and critics with the config as checkpoint metadata.
void save_train_state(const TrainState& state, const std::string& path);
/// Restores a generator written by save_train_state.
DhGenerator load_generator(const std::string& path, const SkeletonTopology& topology,
                           const ConstraintTable& table, const CameraIntrinsics& camera);

}  // namespace dhaug
