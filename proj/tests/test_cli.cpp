#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spg/cli/cli.hpp"
#include "spg/image_io.hpp"
#include "spg/spgt.hpp"

namespace spg::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("spg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string path(const std::string& rel) const { return (root_ / rel).string(); }
  void write(const std::string& rel, const std::string& text) const { std::ofstream(root_ / rel) << text; }
  // Every regular file under root, relative.
  std::vector<std::string> tree() const {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root_))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root_).string());
    std::sort(files.begin(), files.end());
    return files;
  }
  fs::path root_;
};

const char* kTinyConfig =
    "image_size = 32\nclasses = 6\npairs = 10\npairs_per_identity = 2\nbase_width = 4\nstyle_dim = 4\n"
    "sean_hidden = 4\ndepth = 3\nspatn_blocks = 1\nres_blocks = 1\ndisc_depth = 2\niters = 2\nval_every = 2\n"
    "batch_size = 2\nspatn_iters = 2\n";

TEST_F(Cli, UnknownSubcommandIsUsageError) {
  const Result r = call({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("synth-data"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, NoArgumentsIsUsageError) { EXPECT_EQ(call({}).code, kExitUsage); }

TEST_F(Cli, HelpSucceeds) {
  const Result r = call({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("train-spgnet"), std::string::npos);
}

TEST_F(Cli, MissingRequiredOptionIsUsageError) { EXPECT_EQ(call({"synth-data", "--n", "3"}).code, kExitUsage); }

TEST_F(Cli, BadSuiteNameIsUsageError) { EXPECT_EQ(call({"check", "--suite", "everything"}).code, kExitUsage); }

TEST_F(Cli, CheckOracleSucceeds) {
  const Result r = call({"check", "--suite", "oracle"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, SynthDataWritesOnlyInsideOut) {
  const Result r = call({"synth-data", "--n", "4", "--size", "32", "--classes", "6", "--seed", "3", "--out", path("data")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const auto& f : tree()) EXPECT_EQ(f.rfind("data/", 0), 0u) << f;
  EXPECT_TRUE(fs::exists(path("data/manifest.csv")));
  EXPECT_TRUE(fs::exists(path("data/00000_src.ppm")));
  EXPECT_TRUE(fs::exists(path("data/00003_flow.phi.spgt")));
}

TEST_F(Cli, SynthSeedFallsBackToEnvironment) {
  ::setenv("SPG_SEED", "77", 1);
  const Result a = call({"synth-data", "--n", "2", "--size", "32", "--out", path("a")});
  ::unsetenv("SPG_SEED");
  const Result b = call({"synth-data", "--n", "2", "--size", "32", "--seed", "77", "--out", path("b")});
  ASSERT_EQ(a.code, kExitOk);
  ASSERT_EQ(b.code, kExitOk);
  EXPECT_EQ(read_ppm(path("a/00001_tgt.ppm")), read_ppm(path("b/00001_tgt.ppm")));
}

TEST_F(Cli, BadSynthParametersFail) {
  const Result r = call({"synth-data", "--n", "2", "--size", "48", "--out", path("d")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, PoseMapsWritesThirtyChannels) {
  ASSERT_EQ(call({"synth-data", "--n", "1", "--size", "32", "--out", path("d")}).code, kExitOk);
  ASSERT_EQ(call({"pose-maps", "--keypoints", path("d/00000_tgt.kp"), "--size", "32", "--out", path("p/pose.spgt")}).code,
            kExitOk);
  EXPECT_EQ(load_tensor<float>(path("p/pose.spgt")).shape(), (Shape{1, 30, 32, 32}));
  ASSERT_EQ(call({"pose-maps", "--keypoints", path("d/00000_tgt.kp"), "--size", "32", "--no-distance-maps", "--out",
                  path("p/pose18.spgt")})
                .code,
            kExitOk);
  EXPECT_EQ(load_tensor<float>(path("p/pose18.spgt")).shape().c, 18);
}

TEST_F(Cli, EvalOfTruthAgainstItselfIsPerfect) {
  ASSERT_EQ(call({"synth-data", "--n", "3", "--size", "32", "--classes", "6", "--out", path("d")}).code, kExitOk);
  const Result r = call({"eval", "--pred", path("d"), "--truth", path("d"), "--classes", "6"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "file,ssim,mssim,miou");
  EXPECT_NE(r.out.find("\nmean,1,1,1\n"), std::string::npos) << r.out;
}

TEST_F(Cli, EvalMissingTruthNamesTheFile) {
  ASSERT_EQ(call({"synth-data", "--n", "1", "--size", "32", "--out", path("d")}).code, kExitOk);
  fs::create_directories(path("t"));
  const Result r = call({"eval", "--pred", path("d"), "--truth", path("t"), "--metrics", "ssim"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("00000_src.ppm"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownConfigKeyFails) {
  write("bad.cfg", "classes = 6\nwidht = 4\n");
  const Result r = call({"train-spatn", "--config", path("bad.cfg"), "--out", path("o")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainAndInferEndToEnd) {
  write("tiny.cfg", kTinyConfig);
  Result r = call({"train-spatn", "--config", path("tiny.cfg"), "--out", path("s1")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("val_miou"), std::string::npos);
  r = call({"train-spgnet", "--config", path("tiny.cfg"), "--scheme", "parallel", "--out", path("s2")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  ASSERT_EQ(call({"synth-data", "--n", "1", "--size", "32", "--classes", "6", "--out", path("d")}).code, kExitOk);

  std::vector<std::string> infer{"infer",
                                 "--spatn", path("s1/spatn.ckpt"),
                                 "--spgnet", path("s2/spgnet.ckpt"),
                                 "--source", path("d/00000_src.ppm"),
                                 "--source-parsing", path("d/00000_src.pgm"),
                                 "--source-keypoints", path("d/00000_src.kp"),
                                 "--target-keypoints", path("d/00000_tgt.kp"),
                                 "--flow", path("d/00000_flow"),
                                 "--out", path("gen")};
  r = call(infer);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(read_ppm(path("gen/generated.ppm")).shape(), (Shape{1, 3, 32, 32}));
  EXPECT_TRUE(fs::exists(path("gen/parsing.pgm")));

  infer[14] = path("d/nowhere");
  r = call(infer);
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find(path("d/nowhere") + ".phi.spgt"), std::string::npos) << r.err;
}

TEST_F(Cli, NoDistanceMapsFlagReachesTheConfig) {
  write("tiny.cfg", kTinyConfig);
  ASSERT_EQ(call({"train-spatn", "--config", path("tiny.cfg"), "--no-distance-maps", "--out", path("s1")}).code, kExitOk);
  std::ifstream is(path("s1/config.txt"));
  std::stringstream ss;
  ss << is.rdbuf();
  EXPECT_NE(ss.str().find("distance_maps = false"), std::string::npos);
}

TEST_F(Cli, SchemeAllWritesComparison) {
  write("tiny.cfg", kTinyConfig);
  const Result r = call({"train-spgnet", "--config", path("tiny.cfg"), "--scheme", "all", "--out", path("cmp")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* d : {"cmp/seq/spgnet.ckpt", "cmp/joint/spgnet.ckpt", "cmp/parallel/spgnet.ckpt", "cmp/schemes.csv"})
    EXPECT_TRUE(fs::exists(path(d))) << d;
  for (const auto& f : tree()) EXPECT_TRUE(f == "tiny.cfg" || f.rfind("cmp/", 0) == 0) << f;
}

}  // namespace
}  // namespace spg::cli
