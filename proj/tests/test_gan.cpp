#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dhaug/errors.hpp"
#include "dhaug/gan.hpp"
#include "dhaug/pose_ops.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace dhaug;

namespace {

TrainConfig small_config(GenMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.frames = 4;
  c.net.generator_hidden = {32, 32};
  c.net.encoder_hidden = {16, 16};
  c.net.head_width = 8;
  c.z_dim = 16;
  c.batch_single = 32;
  c.batch_video = 8;
  c.epochs = 6;
  c.seed = 5;
  return c;
}

DhGenerator small_generator(GenMode mode, std::mt19937_64& rng) {
  return DhGenerator::create(small_config(mode), default_topology(), default_constraint_table(), default_camera(), rng);
}

std::vector<PosePair> band_pairs(long count, int frames, std::uint64_t seed) {
  return narrow_band_corpus(default_topology(), default_constraint_table(), default_camera(), count, frames, seed).pairs;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const TrainConfig c;
  CHECK(c.alpha == 10.0);
  CHECK(c.beta_epoch == 4);
  CHECK(c.z_dim == 128);
  CHECK(c.lr == 1e-4);
  CHECK(c.critic_steps == 5);
  CHECK(c.net.generator_hidden == std::vector<int>{512, 512});
  c.check();

  TrainConfig v = c;
  v.mode = GenMode::video;
  v.epochs = 3;
  CHECK_THROWS_AS(v.check(), InvalidArgument);
  v.epochs = 4;
  v.check();
  TrainConfig bad = c;
  bad.z_dim = 0;
  CHECK_THROWS_AS(bad.check(), InvalidArgument);

  const TrainConfig back = train_config_from_json(train_config_to_json(small_config(GenMode::video)));
  CHECK(back.mode == GenMode::video);
  CHECK(back.frames == 4);
  CHECK(back.net.encoder_hidden == std::vector<int>{16, 16});
  CHECK(back.ranges.bounds[5].min == doctest::Approx(4.0));
  CHECK(back.ranges.bounds[0].max == doctest::Approx(3.141592653589793).epsilon(1e-12));
  CHECK_THROWS_AS(train_config_from_json(R"({"alpah": 3})"), ParseError);
  CHECK_THROWS_AS(mode_from_name("movie"), InvalidArgument);
}

TEST_CASE("latent sampling") {
  std::mt19937_64 a(9), b(9);
  const Tensor za = sample_latent(100, 128, a), zb = sample_latent(100, 128, b);
  CHECK(za == zb);
  std::mt19937_64 rng(10);
  const Tensor z = sample_latent(100000, 4, rng);
  for (int c = 0; c < 4; ++c) {
    const double mean = z.col(c).mean();
    const double var = (z.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
  }
  CHECK_THROWS_AS(sample_latent(0, 3, rng), InvalidArgument);
}

TEST_CASE("generator layout") {
  CHECK(DhGenerator::raw_width(default_topology(), GenMode::single_frame, 1) == 54);
  CHECK(DhGenerator::raw_width(default_topology(), GenMode::video, 9) == 15 + 9 * 39);
  std::mt19937_64 rng(1);
  const DhGenerator g = small_generator(GenMode::video, rng);
  const auto& gather = g.frame_gather();
  REQUIRE(gather.size() == 4u * 54);
  // length columns shared by every frame, angle columns distinct
  for (int t = 1; t < 4; ++t) {
    for (int id = kAngleParamCount; id < kParamCount; ++id) CHECK(gather[t * 54 + id] == gather[id]);
    for (int id = 0; id < kAngleParamCount; ++id) CHECK(gather[t * 54 + id] != gather[id]);
  }
  std::vector<int> used(gather.begin(), gather.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  CHECK(used.size() == static_cast<std::size_t>(DhGenerator::raw_width(default_topology(), GenMode::video, 4)));
}

TEST_CASE("zero-weight generator emits the mid-range pose") {
  std::mt19937_64 rng(2);
  DhGenerator g = small_generator(GenMode::single_frame, rng);
  for (Tensor* t : g.net.parameters()) t->setZero();
  const GeneratedBatch b = generate(g, Tensor::Zero(1, g.z_dim()));
  ParamVector mid;
  for (int id = 0; id < kParamCount; ++id) mid[id] = default_constraint_table()[id].mid();
  const Pose3D expect = forward_kinematics(default_topology(), mid, {0, 0, 0, 0, 0, 5.5});
  for (int j = 0; j < kKeypointCount; ++j) CHECK((b.poses3d[0].joints[j] - expect.joints[j]).norm() < 1e-12);
  CHECK_FALSE(b.rejected[0]);
}

TEST_CASE("generated poses are admissible and consistent") {
  std::mt19937_64 rng(3);
  const DhGenerator g = small_generator(GenMode::video, rng);
  const GeneratedBatch b = generate(g, sample_latent(50, g.z_dim(), rng) * 4.0);
  REQUIRE(b.poses3d.size() == 200);
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    CHECK(validate_params(b.params[i], default_constraint_table()).ok);
    const Pose3D direct = forward_kinematics(default_topology(), b.params[i], b.globals[i]);
    for (int j = 0; j < kKeypointCount; ++j) CHECK((direct.joints[j] - b.poses3d[i].joints[j]).norm() < 1e-12);
  }
  for (long s = 0; s < b.sequences(); ++s) {
    const auto ref = bone_lengths(default_topology(), b.poses3d[s * 4]);
    for (int t = 1; t < 4; ++t) {
      const auto len = bone_lengths(default_topology(), b.poses3d[s * 4 + t]);
      for (int k = 0; k < kBoneCount; ++k) CHECK(std::abs(len[k] - ref[k]) <= 1e-9);
    }
  }
}

TEST_CASE("graph generator path matches the plain path") {
  for (GenMode mode : {GenMode::single_frame, GenMode::video}) {
    std::mt19937_64 rng(4);
    const DhGenerator g = small_generator(mode, rng);
    const Tensor z = sample_latent(3, g.z_dim(), rng);
    const GeneratedBatch b = generate(g, z);
    ad::Tape tape;
    const GeneratorOutput out = generator_forward(g, nn::bind(tape, g.net, false), tape.constant(z));
    REQUIRE(out.pose3d.rows() == static_cast<long>(b.poses3d.size()));
    for (std::size_t i = 0; i < b.poses3d.size(); ++i) {
      const Pose3D p = pose_from_row(out.pose3d.value().row(i).data());
      for (int j = 0; j < kKeypointCount; ++j) CHECK((p.joints[j] - b.poses3d[i].joints[j]).norm() < 1e-12);
    }
    CHECK(out.features.single.cols() == single_feature_width(g.pairs()));
    if (mode == GenMode::video) {
      REQUIRE(out.features.motion);
      const auto w = motion_stream_widths(g.pairs(), 4);
      CHECK(out.features.motion->cols() == std::accumulate(w.begin(), w.end(), 0));
      CHECK(out.features.motion->rows() == 3);
    }
  }
}

TEST_CASE("knees stay within [-180, 0] over many samples") {
  std::mt19937_64 rng(6);
  const DhGenerator g = small_generator(GenMode::single_frame, rng);
  const int knees[2] = {default_topology().find_param("r_knee.theta"), default_topology().find_param("l_knee.theta")};
  const GeneratedBatch b = generate(g, sample_latent(5000, g.z_dim(), rng) * 3.0);
  for (const ParamVector& p : b.params) {
    for (int k : knees) {
      const double v = default_topology().params()[k].rest + p[k];
      CHECK(v >= -3.141592653589793);
      CHECK(v <= 0.0);
    }
  }
}

TEST_CASE("single-frame critic") {
  std::mt19937_64 rng(7);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  const NetConfig net = small_config(GenMode::single_frame).net;
  SingleFrameDiscriminator d = SingleFrameDiscriminator::create(pairs, net, rng);
  CHECK(d.critic.widths == std::vector<int>{48, 12, 32});
  const Tensor x = single_features(band_pairs(5, 1, 1), pairs);
  REQUIRE(x.cols() == 92);
  CHECK(discriminate_single(d, x) == discriminate_single(d, x));
  Tensor x2 = x;
  x2.block(0, 48, x.rows(), 12).array() += 0.3;
  CHECK((discriminate_single(d, x2) - discriminate_single(d, x)).cwiseAbs().minCoeff() > 0.0);
  CHECK_THROWS_AS(discriminate_single(d, Tensor::Zero(2, 91)), ShapeError);
  d.critic.set_zero();
  CHECK(discriminate_single(d, x).isZero(0.0));
}

TEST_CASE("motion critic") {
  std::mt19937_64 rng(8);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  const NetConfig net = small_config(GenMode::video).net;
  MultiStreamMotionDiscriminator d = MultiStreamMotionDiscriminator::create(pairs, 4, net, rng);
  const int root = default_topology().root_keypoint();
  std::vector<PosePair> seq = band_pairs(2, 4, 2);
  const Tensor x = motion_features(seq, pairs, 4, root);
  REQUIRE(x.rows() == 2);
  CHECK(x.cols() == d.input_width());

  const Tensor branches = motion_branch_scores(d, x);
  CHECK((branches.rowwise().sum() - discriminate_motion(d, x)).cwiseAbs().maxCoeff() < 1e-12);
  // ablating one branch removes exactly its share
  MultiStreamMotionDiscriminator ablated = d;
  for (Tensor* t : ablated.branches[1].head.parameters()) t->setZero();
  const Tensor after = discriminate_motion(ablated, x);
  CHECK((discriminate_motion(d, x) - after - branches.col(1)).cwiseAbs().maxCoeff() < 1e-12);

  // a static sequence and a shuffled one score differently
  std::vector<PosePair> still(4, seq[0]);
  std::vector<PosePair> shuffled = {seq[2], seq[0], seq[3], seq[1]};
  const Tensor s1 = discriminate_motion(d, motion_features(still, pairs, 4, root));
  const Tensor s2 = discriminate_motion(d, motion_features(shuffled, pairs, 4, root));
  CHECK(std::abs(s1(0, 0) - s2(0, 0)) > 0.0);

  CHECK_THROWS(motion_features(std::vector<PosePair>(seq.begin(), seq.begin() + 3), pairs, 4, root));
  CHECK_THROWS_AS(discriminate_motion(d, Tensor::Zero(1, x.cols() + 1)), ShapeError);
  d.set_zero();
  CHECK(discriminate_motion(d, x).isZero(0.0));
}

TEST_CASE("gamma schedule") {
  CHECK(gamma_schedule(0, 4) == 0);
  CHECK(gamma_schedule(3, 4) == 0);
  CHECK(gamma_schedule(4, 4) == 1);
  CHECK(gamma_schedule(100, 4) == 1);
  int prev = 0;
  for (int e = 0; e < 20; ++e) {
    CHECK(gamma_schedule(e, 7) >= prev);
    prev = gamma_schedule(e, 7);
  }
  CHECK_THROWS_AS(gamma_schedule(-1, 4), InvalidArgument);
}

TEST_CASE("critic and generator losses") {
  std::mt19937_64 rng(11);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  const NetConfig net = small_config(GenMode::video).net;
  SingleFrameDiscriminator ds = SingleFrameDiscriminator::create(pairs, net, rng);
  MultiStreamMotionDiscriminator dm = MultiStreamMotionDiscriminator::create(pairs, 4, net, rng);
  const int root = default_topology().root_keypoint();
  const auto real_pairs = band_pairs(3, 4, 3), fake_pairs = band_pairs(3, 4, 4);
  const Tensor rs = single_features(real_pairs, pairs), fs = single_features(fake_pairs, pairs);
  const Tensor rm = motion_features(real_pairs, pairs, 4, root), fm = motion_features(fake_pairs, pairs, 4, root);

  auto loss_with = [&](const SingleFrameDiscriminator& s, const MultiStreamMotionDiscriminator& m, double alpha,
                       int gamma, const Tensor& fake_single, std::uint64_t seed) {
    ad::Tape tape;
    const auto bs = bind(tape, s.critic);
    const auto bm = bind(tape, m);
    CriticBatch real{tape.constant(rs), tape.constant(rm)};
    CriticBatch fake{tape.constant(fake_single), tape.constant(fm)};
    std::mt19937_64 r(seed);
    return critic_loss(bs, &bm, real, fake, alpha, gamma, r).value()(0, 0);
  };

  SUBCASE("zero critics give alpha") {
    SingleFrameDiscriminator zs = ds;
    zs.critic.set_zero();
    MultiStreamMotionDiscriminator zm = dm;
    zm.set_zero();
    CHECK(loss_with(zs, zm, 10.0, 0, fs, 1) == doctest::Approx(10.0));
    CHECK(loss_with(zs, zm, 10.0, 1, fs, 1) == doctest::Approx(20.0));
  }
  SUBCASE("gamma 0 ignores the motion critic") {
    MultiStreamMotionDiscriminator other = MultiStreamMotionDiscriminator::create(pairs, 4, net, rng);
    CHECK(loss_with(ds, dm, 10.0, 0, fs, 2) == loss_with(ds, other, 10.0, 0, fs, 2));
    CHECK(loss_with(ds, dm, 10.0, 1, fs, 2) != loss_with(ds, other, 10.0, 1, fs, 2));
  }
  SUBCASE("identical batches without penalty") {
    CHECK(std::abs(loss_with(ds, dm, 0.0, 0, rs, 3)) < 1e-12);
  }
  SUBCASE("generator loss") {
    ad::Tape tape;
    SingleFrameDiscriminator shifted = ds;
    shifted.critic.head.layers().back().bias(0, 0) += 0.75;
    const auto b0 = bind(tape, ds.critic), b1 = bind(tape, shifted.critic);
    const auto bm = bind(tape, dm);
    CriticBatch fake{tape.constant(fs), tape.constant(fm)};
    const double l0 = generator_loss(b0, &bm, fake, 0).value()(0, 0);
    CHECK(l0 == doctest::Approx(-discriminate_single(ds, fs).mean()).epsilon(1e-12));
    CHECK(generator_loss(b1, &bm, fake, 0).value()(0, 0) == doctest::Approx(l0 - 0.75).epsilon(1e-12));
    const double l1 = generator_loss(b0, &bm, fake, 1).value()(0, 0);
    CHECK(l1 == doctest::Approx(l0 - discriminate_motion(dm, fm).mean()).epsilon(1e-12));
    SingleFrameDiscriminator zs = ds;
    zs.critic.set_zero();
    CHECK(generator_loss(bind(tape, zs.critic), nullptr, fake, 0).value()(0, 0) == 0.0);
    CHECK_THROWS_AS(generator_loss(b0, nullptr, fake, 1), InvalidArgument);
  }
}

TEST_CASE("critic input gradient matches autodiff") {
  std::mt19937_64 rng(12);
  const AdjacentBonePairs pairs = adjacent_bone_pairs(default_topology());
  MultiStreamMotionDiscriminator dm = MultiStreamMotionDiscriminator::create(pairs, 4, small_config(GenMode::video).net, rng);
  const Tensor x = motion_features(band_pairs(2, 4, 5), pairs, 4, default_topology().root_keypoint());
  ad::Tape tape;
  const auto bm = bind(tape, dm, false);
  Var xv = tape.leaf(x);
  MotionTrace trace;
  Var out = critic_forward(bm, xv, &trace);
  const Tensor analytic = critic_input_gradient(bm, trace).value();
  tape.backward(ad::sum(out));
  CHECK((analytic - xv.grad()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training is deterministic and respects the schedule") {
  TrainConfig cfg = small_config(GenMode::video);
  cfg.beta_epoch = 1;
  cfg.epochs = 2;
  const RealCorpus real = make_real_corpus(band_pairs(12, 4, 6), adjacent_bone_pairs(default_topology()),
                                           GenMode::video, 4, default_topology().root_keypoint());
  CHECK(real.items() == 12);
  auto run = [&] {
    TrainState s = make_train_state(cfg, default_topology(), default_constraint_table(), default_camera());
    long sunk = 0;
    std::vector<EpochMetrics> ms;
    for (int e = 0; e < cfg.epochs; ++e) {
      ms.push_back(train_epoch(s, real, [&](const GeneratedBatch& b) { sunk += static_cast<long>(b.poses3d.size()); }));
    }
    CHECK(sunk == 2 * 48);
    return ms;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == 2);
  CHECK(a[0].gamma == 0);
  CHECK(a[0].motion_term == 0.0);
  CHECK(a[0].penalty_m == 0.0);
  CHECK(a[1].gamma == 1);
  CHECK(a[1].motion_term != 0.0);
  for (int e = 0; e < 2; ++e) {
    CHECK(a[e].violations == 0);
    CHECK(a[e].synthesized == real.pairs);
    CHECK(a[e].ds_real == b[e].ds_real);
    CHECK(a[e].ds_fake == b[e].ds_fake);
    CHECK(a[e].generator_loss == b[e].generator_loss);
    const auto j = nlohmann::json::parse(epoch_metrics_to_json(a[e]));
    CHECK(j["violations"] == 0);
  }
}

TEST_CASE("checkpoint restores the generator") {
  TrainConfig cfg = small_config(GenMode::single_frame);
  TrainState s = make_train_state(cfg, default_topology(), default_constraint_table(), default_camera());
  const std::string path = test::tmp_path("gan.ckpt");
  save_train_state(s, path);
  const DhGenerator g = load_generator(path, default_topology(), default_constraint_table(), default_camera());
  std::mt19937_64 rng(13);
  const Tensor z = sample_latent(4, g.z_dim(), rng);
  const GeneratedBatch a = generate(g, z), b = generate(s.generator, z);
  for (std::size_t i = 0; i < a.poses3d.size(); ++i) {
    // weights are stored as float32
    for (int j = 0; j < kKeypointCount; ++j) CHECK((a.poses3d[i].joints[j] - b.poses3d[i].joints[j]).norm() < 1e-4);
  }
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  CHECK(ck.nets.count("ds.head") == 1);
  CHECK(ck.nets.count("ds.enc2") == 1);
}
