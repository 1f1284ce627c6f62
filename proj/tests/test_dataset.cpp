#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dhaug/dataset.hpp"
#include "dhaug/errors.hpp"
#include "test_util.hpp"

using namespace dhaug;

namespace {

DhGenerator small_generator(GenMode mode, int frames, std::uint64_t seed) {
  TrainConfig c;
  c.mode = mode;
  c.frames = frames;
  c.z_dim = 16;
  c.net.generator_hidden = {32};
  std::mt19937_64 rng(seed);
  return DhGenerator::create(c, default_topology(), default_constraint_table(), default_camera(), rng);
}

std::vector<DatasetRecord> sample_records(long n, std::uint64_t seed) {
  const DhGenerator g = small_generator(GenMode::single_frame, 1, seed);
  std::mt19937_64 rng(seed);
  return batch_records(generate(g, sample_latent(n, g.z_dim(), rng)), default_camera(), 0);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_parse_error_at(const std::string& path, long line) {
  try {
    load_dataset(path);
    FAIL("no exception");
  } catch (const ParseError& e) {
    CHECK(e.line() == line);
  }
}

}  // namespace

TEST_CASE("text round trip is lossless") {
  std::vector<DatasetRecord> recs = sample_records(20, 1);
  recs[3].provenance = Provenance::real;
  recs[3].params.reset();
  recs[3].global.reset();
  recs[4].pose3d.joints[2].x() = 0.1 + 0.2;  // needs all 17 digits
  const std::string path = test::tmp_path("round.dhaug");
  save_dataset(recs, path);
  const LoadedDataset back = load_dataset(path);
  CHECK(back.warnings.empty());
  CHECK(back.topology_hash == default_topology().hash());
  REQUIRE(back.records.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const DatasetRecord &a = recs[i], &b = back.records[i];
    CHECK(a.provenance == b.provenance);
    CHECK(a.sequence_id == b.sequence_id);
    CHECK(a.camera.fx == b.camera.fx);
    for (int j = 0; j < kKeypointCount; ++j) {
      CHECK(a.pose3d.joints[j] == b.pose3d.joints[j]);
      CHECK(a.pose2d.joints[j] == b.pose2d.joints[j]);
    }
    CHECK(a.params.has_value() == b.params.has_value());
    if (a.params) {
      CHECK(a.params->values == b.params->values);
      CHECK(a.global->to_array() == b.global->to_array());
    }
  }
  // writing what was read gives the same bytes
  const std::string again = test::tmp_path("round2.dhaug");
  save_dataset(back.records, again);
  CHECK(slurp(path) == slurp(again));
}

TEST_CASE("binary round trip keeps float precision") {
  const std::vector<DatasetRecord> recs = sample_records(10, 2);
  const std::string path = test::tmp_path("round.bin");
  save_dataset(recs, path, default_topology().hash(), true);
  const LoadedDataset back = load_dataset(path);
  REQUIRE(back.records.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (int j = 0; j < kKeypointCount; ++j) {
      CHECK(back.records[i].pose3d.joints[j].x() == static_cast<double>(static_cast<float>(recs[i].pose3d.joints[j].x())));
    }
    REQUIRE(back.records[i].params);
  }
}

TEST_CASE("malformed files name the line") {
  const std::vector<DatasetRecord> recs = sample_records(3, 3);
  const std::string good = test::tmp_path("good.dhaug");
  save_dataset(recs, good);
  std::vector<std::string> lines;
  {
    std::ifstream in(good);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  REQUIRE(lines.size() == 5);
  const auto write = [&](const std::vector<std::string>& ls) {
    const std::string p = test::tmp_path("bad.dhaug");
    std::ofstream out(p);
    for (const auto& l : ls) out << l << "\n";
    return p;
  };
  SUBCASE("bad number") {
    auto ls = lines;
    ls[3].replace(ls[3].find(' ', 4) + 1, 1, "x");
    expect_parse_error_at(write(ls), 4);
  }
  SUBCASE("short line") {
    auto ls = lines;
    ls[4] = ls[4].substr(0, ls[4].size() / 2);
    expect_parse_error_at(write(ls), 5);
  }
  SUBCASE("bad provenance") {
    auto ls = lines;
    ls[2][0] = 'Q';
    expect_parse_error_at(write(ls), 3);
  }
  SUBCASE("bad header") {
    auto ls = lines;
    ls[0] = "hello";
    expect_parse_error_at(write(ls), 1);
  }
  SUBCASE("other topology only warns") {
    auto ls = lines;
    ls[0] = "# dhaug-dataset 1 topology=abc keypoints=16";
    const LoadedDataset d = load_dataset(write(ls));
    CHECK(d.records.size() == 3);
    CHECK(d.warnings.size() == 1);
  }
  CHECK_THROWS_AS(load_dataset(test::tmp_path("nope.dhaug")), ParseError);
}

TEST_CASE("record checks") {
  std::vector<DatasetRecord> recs = sample_records(5, 4);
  for (const auto& r : recs) CHECK(check_record(r, default_constraint_table()) == 0);
  recs[0].pose2d.joints[3].x() += 1e-3;
  CHECK(check_record(recs[0], default_constraint_table()) == 1);
  const int knee = default_topology().find_param("r_knee.theta");
  (*recs[1].params)[knee] = 1.0;
  CHECK(check_record(recs[1], default_constraint_table()) >= 1);
}

TEST_CASE("synthesis is deterministic and valid") {
  const DhGenerator g = small_generator(GenMode::single_frame, 1, 5);
  SynthOptions opt;
  opt.count = 300;
  opt.seed = 9;
  opt.batch = 64;
  const std::string a = test::tmp_path("synth_a.dhaug"), b = test::tmp_path("synth_b.dhaug");
  const SynthSummary sa = synthesize_dataset(g, opt, a);
  synthesize_dataset(g, opt, b);
  CHECK(sa.count == 300);
  CHECK(sa.records == 300);
  CHECK(sa.violations == 0);
  CHECK(slurp(a) == slurp(b));
  const LoadedDataset d = load_dataset(a);
  CHECK(d.records.size() == 300);
  for (const auto& r : d.records) CHECK(check_record(r, default_constraint_table()) == 0);
}

TEST_CASE("video synthesis and training windows") {
  const DhGenerator g = small_generator(GenMode::video, 5, 6);
  SynthOptions opt;
  opt.count = 7;
  opt.seed = 1;
  const std::string path = test::tmp_path("video.dhaug");
  const SynthSummary s = synthesize_dataset(g, opt, path);
  CHECK(s.records == 35);
  const LoadedDataset d = load_dataset(path);
  for (long seq = 0; seq < 7; ++seq) {
    std::vector<Pose3D> frames;
    for (const auto& r : d.records) {
      if (r.sequence_id == seq) frames.push_back(r.pose3d);
    }
    REQUIRE(frames.size() == 5);
    const auto ref = bone_lengths(default_topology(), frames[0]);
    for (const auto& f : frames) {
      const auto len = bone_lengths(default_topology(), f);
      for (int k = 0; k < kBoneCount; ++k) CHECK(std::abs(len[k] - ref[k]) <= 1e-9);
    }
  }
  CHECK(training_pairs(d.records, GenMode::video, 5).size() == 35);
  CHECK(training_pairs(d.records, GenMode::video, 3).size() == 21);
  CHECK(training_pairs(d.records, GenMode::single_frame, 1).size() == 35);
}

TEST_CASE("skeleton video export") {
  const DhGenerator g = small_generator(GenMode::video, 3, 7);
  std::mt19937_64 rng(7);
  const GeneratedBatch b = generate(g, sample_latent(1, g.z_dim(), rng));
  const std::string path = test::tmp_path("clip.json");
  export_skeleton_video(b.poses3d, default_topology(), path);
  const SkeletonVideo v = load_skeleton_video(path);
  CHECK(v.frames.size() == 3);
  CHECK(v.keypoints == default_topology().keypoint_names());
  CHECK(v.edges == default_topology().bones());
  for (int j = 0; j < kKeypointCount; ++j) CHECK(v.frames[1].joints[j] == b.poses3d[1].joints[j]);
  CHECK_THROWS_AS(export_skeleton_video({}, default_topology(), path), InvalidArgument);
}
