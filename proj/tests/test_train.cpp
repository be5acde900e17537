#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "spg/train.hpp"

namespace spg {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spg_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Column `col` of every data row.
std::vector<double> column(const fs::path& csv, const std::string& col) {
  std::istringstream is(slurp(csv));
  std::string line;
  std::getline(is, line);
  std::vector<std::string> head;
  {
    std::stringstream hs(line);
    for (std::string h; std::getline(hs, h, ',');) head.push_back(h);
  }
  const auto idx = std::find(head.begin(), head.end(), col) - head.begin();
  std::vector<double> out;
  while (std::getline(is, line)) {
    std::stringstream ls(line);
    std::string cellv;
    for (long i = 0; i <= idx; ++i) std::getline(ls, cellv, ',');
    out.push_back(cellv.empty() ? std::nan("") : std::stod(cellv));
  }
  return out;
}

RunConfig tiny_run() {
  RunConfig c;
  c.set("image_size", "32");
  c.set("classes", "6");
  c.set("pairs", "20");
  c.set("pairs_per_identity", "2");
  c.set("base_width", "4");
  c.set("style_dim", "4");
  c.set("sean_hidden", "4");
  c.set("depth", "3");
  c.set("spatn_blocks", "1");
  c.set("res_blocks", "1");
  c.set("disc_depth", "2");
  c.set("iters", "4");
  c.set("val_every", "2");
  c.set("log_every", "1");
  c.set("batch_size", "2");
  c.set("spatn_iters", "3");
  c.set("seed", "5");
  return c;
}

TEST(Train, StageOneInitialLossNearLogC) {
  RunConfig c = tiny_run();
  c.set("iters", "1");
  const TrainData data(synth_dataset(c.synth()), c.model);
  const Stage1Result r = train_stage1(c, data, {});
  EXPECT_NEAR(r.first_train_ce, std::log(6.0), 0.5);
}

TEST(Train, ZeroAdversarialWeightDecreasesReconstructionLoss) {
  RunConfig c;
  c.set("image_size", "64");
  c.set("classes", "8");
  c.set("pairs", "100");
  c.set("base_width", "8");
  c.set("style_dim", "8");
  c.set("sean_hidden", "8");
  c.set("res_blocks", "1");
  c.set("lambda_adv", "0");
  c.set("iters", "50");
  c.set("log_every", "10");
  c.set("val_every", "50");
  c.set("val_samples", "4");
  c.set("lr_g", "1e-3");
  const fs::path out = scratch("adv0");
  const TrainData data(synth_dataset(c.synth()), c.model);
  train_stage2(c, data, {out, nullptr});
  const auto l1 = column(out / "metrics.csv", "loss_l1");
  const auto perc = column(out / "metrics.csv", "loss_perc");
  const auto adv = column(out / "metrics.csv", "loss_adv");
  ASSERT_EQ(l1.size(), 5u);
  for (std::size_t i = 1; i < l1.size(); ++i)
    EXPECT_LT(l1[i] + perc[i], l1[i - 1] + perc[i - 1]) << "window " << i;
  for (double a : adv) EXPECT_TRUE(std::isnan(a) || a >= 0);
  fs::remove_all(out);
}

TEST(Train, AllSchemesRunAndWriteOutputs) {
  const RunConfig base = tiny_run();
  const TrainData data(synth_dataset(base.synth()), base.model);
  std::vector<Stage2Result> rows;
  for (Scheme s : {Scheme::kSequential, Scheme::kJoint, Scheme::kParallel}) {
    RunConfig c = base;
    c.train.scheme = s;
    const fs::path out = scratch("scheme_" + scheme_name(s));
    rows.push_back(train_stage2(c, data, {out, nullptr}));
    EXPECT_TRUE(rows.back().losses_finite);
    for (const char* f : {"spgnet.ckpt", "spgnet.ckpt.cfg", "disc.ckpt", "spatn.ckpt", "metrics.csv", "config.txt",
                          "summary.csv"})
      EXPECT_TRUE(fs::exists(out / f)) << scheme_name(s) << ' ' << f;
    fs::remove_all(out);
  }
  const fs::path csv = scratch("schemes.csv");
  write_scheme_comparison(csv, rows);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "scheme,val_l1,val_ssim,val_mssim,val_miou");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  fs::remove(csv);
}

TEST(Train, StageOneIsBitReproducible) {
  const RunConfig c = tiny_run();
  const TrainData data(synth_dataset(c.synth()), c.model);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  train_stage1(c, data, {a, nullptr});
  train_stage1(c, data, {b, nullptr});
  for (const char* f : {"spatn.ckpt", "metrics.csv", "summary.csv", "config.txt"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, ConfigTxtHoldsTheResolvedConfig) {
  const RunConfig c = tiny_run();
  const TrainData data(synth_dataset(c.synth()), c.model);
  const fs::path out = scratch("resolved");
  train_stage1(c, data, {out, nullptr});
  EXPECT_EQ(RunConfig::load(out / "config.txt").resolved(), c.resolved());
  EXPECT_EQ(RunConfig::load(out / "spatn.ckpt.cfg").resolved(), c.resolved());
  fs::remove_all(out);
}

TEST(Train, SequentialLoadsAPretrainedCheckpoint) {
  RunConfig c = tiny_run();
  const TrainData data(synth_dataset(c.synth()), c.model);
  const fs::path s1 = scratch("seq_s1"), s2 = scratch("seq_s2");
  train_stage1(c, data, {s1, nullptr});
  c.train.scheme = Scheme::kSequential;
  c.train.spatn_ckpt = (s1 / "spatn.ckpt").string();
  train_stage2(c, data, {s2, nullptr});
  // the frozen stage-one network is written back unchanged
  EXPECT_EQ(slurp(s1 / "spatn.ckpt"), slurp(s2 / "spatn.ckpt"));
  fs::remove_all(s1);
  fs::remove_all(s2);
}

}  // namespace
}  // namespace spg
