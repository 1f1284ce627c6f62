#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dhaug/cli.hpp"
#include "dhaug/dataset.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace dhaug;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_file(const std::string& name, const std::string& text) {
  const std::string p = test::tmp_path(name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("fk of the rest pose matches the shipped file") {
  const Run r = run({"fk"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  std::ifstream in(std::string(DHAUG_DATA_DIR) + "/rest_pose.json");
  nlohmann::json rest;
  in >> rest;
  for (int k = 0; k < kKeypointCount; ++k) {
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(j["joints"][k][c].get<double>() - rest["joints"][k][c].get<double>()) < 1e-12);
    }
  }
}

TEST_CASE("validate reports violations by name") {
  const std::string bad = write_file("bad_params.json", R"({"deltas": {"r_knee.theta": 200}})");
  Run r = run({"validate", "--params", bad});
  CHECK(r.code == 2);
  CHECK(r.out.find("violation r_knee.theta") != std::string::npos);
  const std::string good = write_file("good_params.json", R"({"deltas": {"r_knee.theta": -30}})");
  r = run({"validate", "--params", good});
  CHECK(r.code == 0);
  CHECK(r.out == "ok\n");
  r = run({"validate"});
  CHECK(r.code == 1);
  const std::string typo = write_file("typo_params.json", R"({"deltas": {"r_kneee.theta": 1}})");
  r = run({"validate", "--params", typo});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") == 0);
}

TEST_CASE("project applies the camera options") {
  nlohmann::json pose;
  pose["joints"] = nlohmann::json::array();
  for (int k = 0; k < kKeypointCount; ++k) pose["joints"].push_back({0.5, -0.25, 2.5});
  const std::string p = write_file("pose.json", pose.dump());
  Run r = run({"project", "--pose", p, "--fx", "1000", "--fy", "1000", "--cx", "500", "--cy", "500"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["joints"][0][0].get<double>() == doctest::Approx(700.0));
  CHECK(j["joints"][0][1].get<double>() == doctest::Approx(400.0));
  pose["joints"][4] = {0, 0, 0.01};
  r = run({"project", "--pose", write_file("near.json", pose.dump())});
  CHECK(r.code == 2);
  CHECK(r.err.find("joint 4") != std::string::npos);
}

TEST_CASE("synth, validate, features and export") {
  const std::string data = test::tmp_path("cli_synth.dhaug");
  Run r = run({"--seed", "3", "synth", "--count", "4", "--mode", "video", "--frames", "3", "-o", data});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(r.out);
  CHECK(summary["records"] == 12);
  CHECK(summary["violations"] == 0);

  r = run({"validate", "--dataset", data});
  CHECK(r.code == 0);
  CHECK(r.out.find("12 records, 0 invalid") != std::string::npos);

  r = run({"features", "--dataset", data, "--sequence", "1"});
  REQUIRE(r.code == 0);
  const auto f = nlohmann::json::parse(r.out);
  CHECK(f["frames"] == 3);
  CHECK(f["diff3d"].size() == 2);

  const std::string clip = test::tmp_path("cli_clip.json");
  r = run({"export-video", "--dataset", data, "--sequence", "2", "-o", clip});
  CHECK(r.code == 0);
  CHECK(load_skeleton_video(clip).frames.size() == 3);
  r = run({"features", "--video", clip});
  CHECK(r.code == 0);

  r = run({"export-video", "--frames", "5", "-o", clip});
  CHECK(r.code == 0);
  CHECK(load_skeleton_video(clip).frames.size() == 5);
}

TEST_CASE("train writes metrics and a usable checkpoint") {
  const std::string data = test::tmp_path("cli_real.dhaug");
  REQUIRE(run({"--seed", "1", "synth", "--count", "24", "-o", data}).code == 0);
  const std::string cfg = write_file("cli_cfg.json", R"({"z_dim": 8, "batch_single": 8, "epochs": 2,
      "generator_hidden": [16], "encoder_hidden": [8, 8], "head_width": 4})");
  const std::string dir = test::tmp_path("cli_train");
  std::filesystem::remove_all(dir);
  Run r = run({"--config", cfg, "--seed", "2", "train", "--data", data, "--out-dir", dir, "--synth"});
  REQUIRE(r.code == 0);
  std::ifstream log(dir + "/metrics.jsonl");
  int lines = 0;
  for (std::string l; std::getline(log, l); ++lines) CHECK(nlohmann::json::parse(l)["violations"] == 0);
  CHECK(lines == 2);
  CHECK(load_dataset(dir + "/epoch_1.dhaug").records.size() == 24);
  const std::string out = test::tmp_path("cli_from_ckpt.dhaug");
  r = run({"synth", "--checkpoint", dir + "/checkpoint.ckpt", "--count", "5", "-o", out});
  CHECK(r.code == 0);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"synth", "--count", "-3", "-o", "x"}).code == 1);
  CHECK(run({"--topology", std::string(DHAUG_DATA_DIR) + "/topology.json", "fk"}).code == 2);
  CHECK(run({"--topology", std::string(DHAUG_DATA_DIR) + "/topology.json", "--constraints",
             std::string(DHAUG_DATA_DIR) + "/constraints.json", "fk"})
            .code == 0);
  const Run h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("synth") != std::string::npos);
}

TEST_CASE("selftest passes") {
  std::ostringstream out;
  CHECK(run_selftest(out) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
}
