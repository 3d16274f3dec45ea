// Copyright 2026 The segrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gtest/gtest.h"
#include "segrefine/error.hpp"
#include "segrefine/io.hpp"

namespace segrefine {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "segrefine");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("segrefine_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void gen_small() {
    ASSERT_EQ(run({"gen", "--count", "4", "--val-count", "2", "--size", "32", "--out-dir",
                   path("data")})
                  .code,
              0);
  }

  Result train_small(const std::string& regime, const std::string& ckpt) {
    return run({"train", "--regime", regime, "--out-checkpoint", path(ckpt), "--set",
                "iterations=6", "--set", "batch_size=2", "--set", "width_divisor=16", "--set",
                "crop_size=32", "--set", "image_size=32", "--set", "log_every=2", "--set",
                "eval_every=4", "--set", "data_dir=" + path("data")});
  }

  fs::path dir_;
};

TEST(ParseWidthsTest, RangesAndLists) {
  EXPECT_EQ(cli::parse_widths("1..4"), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(cli::parse_widths("1,2,5"), (std::vector<int>{1, 2, 5}));
  EXPECT_EQ(cli::parse_widths("1..3,10"), (std::vector<int>{1, 2, 3, 10}));
  EXPECT_EQ(cli::parse_widths("1..40").size(), 40u);
  for (const std::string bad : {"", "0", "3..1", "2,1", "a", "1..", "1,,2"}) {
    EXPECT_THROW(cli::parse_widths(bad), ConfigError) << bad;
  }
}

TEST_F(CliTest, NoSubcommandOrUnknownFlagIsConfigError) {
  EXPECT_EQ(run({}).code, cli::kExitConfig);
  EXPECT_EQ(run({"gen", "--bogus", "--out-dir", path("x")}).code, cli::kExitConfig);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, GenDefaultsWriteTwoHundredAndFifty) {
  const auto r = run({"gen", "--out-dir", path("data")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto count = [&](const std::string& split) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "data" / split)) {
      n += e.path().string().ends_with(".gt.pgm") ? 1 : 0;
    }
    return n;
  };
  EXPECT_EQ(count("train"), 200u);
  EXPECT_EQ(count("val"), 50u);
  const auto train = load_dataset(dir_ / "data" / "train", 4);
  EXPECT_EQ(train[0].image.shape(), (Shape{1, 3, 64, 64}));
}

TEST_F(CliTest, GenIsByteIdenticalOnRerun) {
  ASSERT_EQ(run({"gen", "--count", "3", "--val-count", "1", "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"gen", "--count", "3", "--val-count", "1", "--out-dir", path("b")}).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir_ / "a");
    ASSERT_EQ(slurp(e.path()), slurp(dir_ / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 12u);
}

TEST_F(CliTest, GenRejectsOneClass) {
  const auto r = run({"gen", "--classes", "1", "--out-dir", path("data")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, TrainJointWritesFullCheckpointAndLog) {
  gen_small();
  const auto r = train_small("joint", "joint.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(path("joint.ckpt"));
  for (const std::string name : {"conv1_1", "conv4_2", "E_conv1_1", "flow", "C_conv3_2", "C_out",
                                 "M_conv1", "mask"}) {
    EXPECT_TRUE(ck.params.contains(name)) << name;
  }
  ASSERT_TRUE(ck.adam.has_value());
  EXPECT_EQ(ck.adam->step, 6u);
  const std::string log = slurp(path("joint.ckpt.log.csv"));
  EXPECT_EQ(log.substr(0, log.find('\n')), "iter,loss,loss_prop,loss_repl,loss_fuse,val_miou");
  EXPECT_EQ(count_lines(log), 4u);  // header + iterations 2, 4, 6
}

TEST_F(CliTest, TrainPropOnlyHasNoReplacementLayers) {
  gen_small();
  const auto r = train_small("prop_only", "prop.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(path("prop.ckpt"));
  EXPECT_TRUE(ck.params.contains("flow"));
  EXPECT_FALSE(ck.params.contains("C_out"));
  EXPECT_FALSE(ck.params.contains("mask"));
}

TEST_F(CliTest, TrainRejectsBadConfig) {
  EXPECT_EQ(run({"train", "--out-checkpoint", path("x.ckpt"), "--set", "nonsense=1"}).code,
            cli::kExitConfig);
  EXPECT_EQ(run({"train", "--regime", "both", "--out-checkpoint", path("x.ckpt")}).code,
            cli::kExitConfig);
  std::ofstream(path("run.cfg")) << "iterations=0\n";
  EXPECT_EQ(run({"train", "--config", path("run.cfg"), "--out-checkpoint", path("x.ckpt")}).code,
            cli::kExitConfig);
}

TEST_F(CliTest, TrainDivergenceExitsWithDiagnostic) {
  gen_small();
  auto data = load_dataset(dir_ / "data" / "train", 4);
  for (auto& s : data) s.image[0] = std::nanf("");
  fs::remove_all(dir_ / "data" / "train");
  save_dataset(dir_ / "data" / "train", data);
  const auto r = run({"train", "--out-checkpoint", path("nan.ckpt"), "--set", "iterations=2",
                      "--set", "batch_size=1", "--set", "width_divisor=16", "--set",
                      "crop_size=32", "--set", "image_size=32", "--set", "eval_every=0", "--set",
                      "diagnostic_checkpoint=" + path("diag.ckpt"), "--set",
                      "data_dir=" + path("data")});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(path("diag.ckpt")));
  EXPECT_FALSE(fs::exists(path("nan.ckpt")));
}

TEST_F(CliTest, InferZeroFlowReproducesInitialMap) {
  gen_small();
  ASSERT_EQ(train_small("joint", "m.ckpt").code, 0);
  auto ck = load_checkpoint(path("m.ckpt"));
  for (auto& v : ck.params.at("flow").kernel.values()) v = 0.0f;
  for (auto& v : ck.params.at("flow").bias.values()) v = 0.0f;
  save_checkpoint(path("zero.ckpt"), ck);

  const std::string image = path("data/val/00000.image.dtf");
  const std::string init = path("data/val/00000.init.dtf");
  const auto r = run({"infer", "--checkpoint", path("zero.ckpt"), "--image", image,
                      "--init-probmap", init, "--out-prefix", path("out/s0")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_tensor(path("out/s0.prop.dtf")), load_tensor(init));
  for (const std::string suffix : {".input.pgm", ".prop.pgm", ".repl.pgm", ".fuse.pgm",
                                   ".fuse.ppm", ".mask.dtf", ".disp.dtf", ".disp.ppm"}) {
    EXPECT_TRUE(fs::exists(path("out/s0" + suffix))) << suffix;
  }
  EXPECT_TRUE(is_prob_map(load_tensor(path("out/s0.fuse.dtf"))));
}

TEST_F(CliTest, InferDisplacementWithinBound) {
  gen_small();
  ASSERT_EQ(train_small("joint", "m.ckpt").code, 0);
  auto ck = load_checkpoint(path("m.ckpt"));
  // Saturate the flow head so the bound is actually reached.
  for (auto& v : ck.params.at("flow").bias.values()) v = 50.0f;
  save_checkpoint(path("sat.ckpt"), ck);
  const auto r = run({"infer", "--checkpoint", path("sat.ckpt"), "--image",
                      path("data/val/00001.image.dtf"), "--init-probmap",
                      path("data/val/00001.init.dtf"), "--out-prefix", path("s1")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Tensor disp = load_tensor(path("s1.disp.dtf"));
  float peak = 0.0f;
  for (const float v : disp.values()) peak = std::max(peak, std::abs(v));
  EXPECT_LE(peak, ck.max_disp_px);
  EXPECT_GT(peak, 0.99f * ck.max_disp_px);
  EXPECT_NE(r.out.find("max displacement"), std::string::npos);
}

TEST_F(CliTest, InferRejectsMismatchedInputs) {
  gen_small();
  ASSERT_EQ(train_small("joint", "m.ckpt").code, 0);
  save_tensor(path("bad.dtf"), Tensor(Shape{1, 4, 32, 32}));  // all zeros, not a distribution
  const auto r = run({"infer", "--checkpoint", path("m.ckpt"), "--image",
                      path("data/val/00000.image.dtf"), "--init-probmap", path("bad.dtf"),
                      "--out-prefix", path("o")});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, EvalPerfectPredictionAndCsvShape) {
  gen_small();
  fs::create_directories(dir_ / "pred");
  for (const std::string id : {"00000", "00001"}) {
    fs::copy_file(dir_ / "data" / "val" / (id + ".gt.pgm"), dir_ / "pred" / (id + ".fuse.pgm"));
  }
  const auto r = run({"eval", "--pred-dir", path("pred"), "--gt-dir", path("data/val"),
                      "--classes", "4", "--out", path("trimap.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mIoU fuse 1"), std::string::npos) << r.out;
  std::istringstream csv(slurp(path("trimap.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "width,miou_input,miou_prop,miou_repl,miou_fuse");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(line, std::to_string(rows) + ",,,,1");
  }
  EXPECT_EQ(rows, 40);
}

TEST_F(CliTest, EvalListsEveryMissingGroundTruth) {
  gen_small();
  fs::create_directories(dir_ / "pred");
  fs::copy_file(dir_ / "data" / "val" / "00000.gt.pgm", dir_ / "pred" / "00000.pgm");
  fs::copy_file(dir_ / "data" / "val" / "00000.gt.pgm", dir_ / "pred" / "orphan_a.pgm");
  fs::copy_file(dir_ / "data" / "val" / "00000.gt.pgm", dir_ / "pred" / "orphan_b.pgm");
  const auto r = run({"eval", "--pred-dir", path("pred"), "--gt-dir", path("data/val")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("orphan_a"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("orphan_b"), std::string::npos) << r.err;
}

TEST_F(CliTest, AblateWritesCurvesAndSummary) {
  const auto r = run({"ablate", "--seeds", "3", "--trimap-widths", "1..3", "--out-dir",
                      path("abl"), "--set", "iterations=2", "--set", "batch_size=2", "--set",
                      "width_divisor=16", "--set", "crop_size=32", "--set", "image_size=32",
                      "--set", "train_count=4", "--set", "val_count=2", "--set", "log_every=1",
                      "--set", "eval_every=0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path("abl/trimap_seed3.csv"));
  EXPECT_EQ(count_lines(csv), 4u);
  EXPECT_EQ(count_lines(slurp(path("abl/joint_log_seed3.csv"))), 3u);
  EXPECT_NE(slurp(path("abl/summary.txt")).find("repl_only"), std::string::npos);
}

}  // namespace
}  // namespace segrefine
