#include <gtest/gtest.h>

#include "spg/models.hpp"
#include "spg/synth.hpp"
#include "spg/train.hpp"

namespace spg {
namespace {

ModelConfig small() {
  ModelConfig c;
  c.image_size = 32;
  c.classes = 6;
  c.base_width = 4;
  c.style_dim = 4;
  c.sean_hidden = 4;
  c.depth = 3;
  c.spatn_blocks = 2;
  c.res_blocks = 1;
  c.disc_depth = 2;
  return c;
}

TEST(ModelConfig, RejectsImpossibleDepth) {
  ModelConfig c = small();
  c.depth = 6;  // 32 / 2^6 < 1
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, PoseChannelsFollowDistanceMapFlag) {
  ModelConfig c = small();
  EXPECT_EQ(c.pose_channels(), 30);
  c.distance_maps = false;
  EXPECT_EQ(c.pose_channels(), 18);
}

TEST(Models, OutputShapesAndRanges) {
  const ModelConfig cfg = small();
  SynthConfig sc;
  sc.pairs = 2;
  sc.size = 32;
  sc.classes = 6;
  const TrainData data(synth_dataset(sc), cfg);
  const Batch b = data.batch({0, 1});

  Spatn<float> spatn(cfg);
  const Var<float> probs = spatn(b.pose_s, b.pose_t, b.source_onehot, Mode{false});
  EXPECT_EQ(probs.shape(), (Shape{2, 6, 32, 32}));
  for (int y = 0; y < 32; y += 7) {
    float total = 0;
    for (int c = 0; c < 6; ++c) total += probs.value()(1, c, y, y);
    EXPECT_NEAR(total, 1.0f, 1e-5);
  }

  SpgNet<float> gen(cfg);
  EXPECT_EQ(gen.block_count(), 3u);
  const Tensor<float> img = generate(gen, b, b.target_onehot);
  EXPECT_EQ(img.shape(), (Shape{2, 3, 32, 32}));
  for (float v : img.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }

  Discriminator<float> disc(cfg);
  EXPECT_EQ(disc(b.target, b.source, b.pose_t).shape(), (Shape{2, 1, 8, 8}));
}

TEST(Models, SameSeedSameWeights) {
  SpgNet<float> a(small()), b(small());
  for (const auto& [name, e] : a.params().entries())
    EXPECT_EQ(e.var.value(), b.params().get(name).value()) << name;
}

TEST(Models, SpadeVariantIgnoresTheStylePath) {
  ModelConfig c = small();
  c.norm = NormVariant::kSpade;
  SynthConfig sc;
  sc.pairs = 1;
  sc.size = 32;
  sc.classes = 6;
  const TrainData data(synth_dataset(sc), c);
  const Batch b = data.batch({0});
  SpgNet<float> net(c);
  Tape<float> tape;
  tape.backward(mean(net(b.pose_t, b.source, std::span<const SemanticMap>(b.source_maps), b.target_onehot, b.flow,
                         Mode{true})));
  int style = 0, touched = 0;
  for (const auto& [name, e] : net.params().entries()) {
    if (name.find("style") == std::string::npos) continue;
    ++style;
    touched += e.var.has_grad();
  }
  EXPECT_GT(style, 0);
  EXPECT_EQ(touched, 0);
  EXPECT_TRUE(net.params().get("spgnet.out.weight").has_grad());
}

}  // namespace
}  // namespace spg
