#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spg/config.hpp"
#include "spg/gradcheck.hpp"
#include "spg/optim.hpp"
#include "spg/pose.hpp"
#include "spg/semantics.hpp"
#include "spg/spgt.hpp"

namespace spg {
namespace {

TEST(Tensor, IndexingIsNchwRowMajor) {
  Tensor<float> t(Shape{2, 3, 4, 5});
  t(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t.values().back(), 7.0f);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.plane(1, 2)[19], 7.0f);
}

TEST(Tensor, StackBatchRejectsMismatchedShapes) {
  std::vector<Tensor<float>> parts{Tensor<float>(Shape{1, 2, 3, 3}), Tensor<float>(Shape{1, 2, 3, 4})};
  EXPECT_THROW(stack_batch(parts), ShapeError);
}

TEST(Autograd, SharedInputAccumulates) {
  Var<double> x(Tensor<double>(Shape{1, 1, 1, 3}, 2.0), true);
  Tape<double> tape;
  Var<double> y = sum(add(mul(x, x), x));  // d/dx = 2x + 1
  tape.backward(y);
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 5.0);
}

TEST(Autograd, DetachStopsGradient) {
  Var<double> x(Tensor<double>(Shape{1, 1, 1, 2}, 1.5), true);
  Tape<double> tape;
  tape.backward(sum(mul(x, detach(x))));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 1.5);
}

TEST(Autograd, TapeIsSingleUse) {
  Var<double> x(Tensor<double>(Shape{1, 1, 1, 1}, 1.0), true);
  Tape<double> tape;
  Var<double> y = sum(x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), std::logic_error);
}

TEST(Autograd, NoTapeRecordsNothing) {
  Var<double> x(Tensor<double>(Shape{1, 1, 1, 1}, 1.0), true);
  Var<double> y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, CatchesAWrongGradient) {
  ParamStore<double> s;
  s.add("x", Tensor<double>(Shape{1, 1, 2, 2}, 0.7));
  // The closure records a deliberately wrong backward (factor 3 instead of 2).
  auto f = [](ParamStore<double>& p) {
    Var<double> x = p.get("x");
    Tensor<double> v = x.value();
    for (auto& e : v.values()) e *= e;
    Var<double> out(v);
    if (needs_grad<double>({&x}))
      record_op<double>("bad_square", {&x}, out, [x, out]() mutable {
        Tensor<double>& g = x.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3 * x.value()[i] * out.grad()[i];
      });
    return sum(out);
  };
  EXPECT_FALSE(grad_check<double>(f, s, 1e-5, 1).ok(1e-5));
}

TEST(Pose, KeypointTextRoundTrip) {
  Keypoints kp{};
  kp[kNeck] = {12.5, 3.25, true};
  kp[4] = {1, 2, false};
  const Keypoints back = parse_keypoints(format_keypoints(kp));
  EXPECT_EQ(back, kp);
}

TEST(Pose, MalformedKeypointsThrow) { EXPECT_THROW(parse_keypoints("not a keypoint file"), ParseError); }

TEST(Pose, LimbSetHasTwelveSegments) { EXPECT_EQ(LimbSet::standard().size(), static_cast<std::size_t>(kNumLimbs)); }

TEST(Pose, DistanceMapDecaysWithDistance) {
  Keypoints kp{};
  const auto [a, b] = LimbSet::standard()[2];
  kp[a] = {10, 10, true};
  kp[b] = {10, 30, true};
  const Tensor<float> dm = distance_map(kp, LimbSet::standard(), 40, 40);
  EXPECT_FLOAT_EQ(dm(0, 2, 20, 10), 1.0f);
  EXPECT_NEAR(dm(0, 2, 20, 13), std::exp(-0.3), 1e-6);
  EXPECT_NEAR(dm(0, 2, 0, 10), std::exp(-1.0), 1e-6);  // beyond the endpoint
  EXPECT_GT(dm(0, 2, 20, 12), dm(0, 2, 20, 14));
}

TEST(Semantics, OneHotAndArgmaxAreInverse) {
  SemanticMap m(4, 5, 3);
  for (int i = 0; i < 20; ++i) m.labels()[i] = static_cast<std::uint8_t>(i % 3);
  EXPECT_EQ(argmax_map(one_hot<float>(m)), m);
}

TEST(Semantics, LabelOutOfRangeIsRejected) {
  SemanticMap m(2, 2, 3);
  m.at(1, 1) = 3;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Spgt, RejectsTruncatedFile) {
  const auto path = std::filesystem::temp_directory_path() / "spg_truncated.spgt";
  save_tensor(path, Tensor<float>(Shape{1, 2, 3, 4}, 1.0f));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(load_tensor<float>(path), std::exception);
  std::filesystem::remove(path);
}

TEST(Adam, MinimizesAQuadratic) {
  ParamStore<double> s;
  s.add("w", Tensor<double>(Shape{1, 1, 1, 4}, 3.0));
  Adam<double> adam(AdamConfig{0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 400; ++i) {
    Tape<double> tape;
    Var<double> w = s.get("w");
    tape.backward(sum(mul(w, w)));
    adam.step(s);
    s.zero_grad();
  }
  for (double v : s.get("w").value().values()) EXPECT_LT(std::abs(v), 0.05);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore<double> s;
  s.add("w", Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  Adam<double> adam(AdamConfig{0.1, 0.5, 0.999, 1e-8});
  Tape<double> tape;
  tape.backward(affine(sum(s.get("w")), 4.0));
  adam.step(s);
  EXPECT_NEAR(s.get("w").value()[0], 0.9, 1e-7);
}

TEST(Adam, UpdateIsIndependentOfParameterOrder) {
  auto run = [](bool reversed) {
    ParamStore<double> s;
    const std::vector<std::string> names = reversed ? std::vector<std::string>{"b", "a"} : std::vector<std::string>{"a", "b"};
    for (const auto& n : names) s.add(n, Tensor<double>(Shape{1, 1, 1, 2}, n == "a" ? 1.0 : -2.0));
    Adam<double> adam;
    for (int i = 0; i < 3; ++i) {
      Tape<double> tape;
      tape.backward(sum(mul(mul(s.get("a"), s.get("b")), s.get("a"))));
      adam.step(s);
      s.zero_grad();
    }
    return std::pair{s.get("a").value(), s.get("b").value()};
  };
  EXPECT_EQ(run(false), run(true));
}

TEST(Adam, NonFiniteGradientThrowsWithoutUpdating) {
  ParamStore<double> s;
  s.add("ok", Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  s.add("zz", Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  Tape<double> tape;
  tape.backward(add(sum(s.get("ok")), sum(s.get("zz"))));
  s.get("zz").node()->grad_buffer()[0] = std::numeric_limits<double>::quiet_NaN();
  Adam<double> adam;
  try {
    adam.step(s);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
  EXPECT_EQ(s.get("ok").value()[0], 1.0);
}

TEST(PlateauSchedule, HalvesAfterPatienceAndFloors) {
  PlateauSchedule p(2, 0.5, 1e-4, 0.25);
  EXPECT_EQ(p.observe(1.0), 1.0);
  EXPECT_EQ(p.observe(1.0), 1.0);
  EXPECT_EQ(p.observe(1.0), 0.5);
  for (int i = 0; i < 10; ++i) p.observe(1.0);
  EXPECT_EQ(p.multiplier(), 0.25);
  EXPECT_EQ(p.observe(0.5), 0.25);
}

TEST(Config, ParsesCommentsAndOverrides) {
  const RunConfig c = RunConfig::parse("# toy\nclasses = 6\n\nlambda_l1 = 2.5  # heavier\nscheme = joint\n");
  EXPECT_EQ(c.model.classes, 6);
  EXPECT_EQ(c.weights.l1, 2.5);
  EXPECT_EQ(c.train.scheme, Scheme::kJoint);
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    RunConfig::parse("classes = 6\nwidth = 3\n", "toy.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("toy.cfg:2"), std::string::npos) << e.what();
  }
}

TEST(Config, ResolvedTextRoundTrips) {
  RunConfig c;
  c.set("seed", "99");
  c.set("lr_g", "0.000123");
  c.set("distance_maps", "false");
  const RunConfig back = RunConfig::parse(c.resolved());
  EXPECT_EQ(back.resolved(), c.resolved());
  EXPECT_EQ(back.model.seed, 99u);
}

TEST(Config, BadValuesAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("iters", "many"), ConfigError);
  EXPECT_THROW(c.set("scheme", "sideways"), ConfigError);
  c.set("lambda_adv", "-1");
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace spg
