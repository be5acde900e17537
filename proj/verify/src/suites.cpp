#include "spg/verify/suites.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "spg/gradcheck.hpp"
#include "spg/models.hpp"
#include "spg/pose.hpp"
#include "spg/spgt.hpp"
#include "spg/synth.hpp"
#include "spg/verify/oracles.hpp"

namespace spg::verify {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  int integer(int lo, int hi) { return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1)); }

 private:
  std::mt19937_64 gen_;
};

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Values with magnitude in [0.1, 1], away from kinks at zero.
template <typename T>
Tensor<T> signed_away_from_zero(Shape s, Rng& rng) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>((rng.uniform() < 0 ? -1 : 1) * rng.uniform(0.1, 1.0));
  return t;
}

SemanticMap random_map(int h, int w, int classes, Rng& rng) {
  SemanticMap m(h, w, classes);
  for (auto& l : m.labels()) l = static_cast<std::uint8_t>(rng.integer(0, classes - 1));
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

CheckResult check(std::string name, bool pass, std::string detail = {}) {
  return {std::move(name), pass, std::move(detail)};
}

// sum(r * y) / sqrt(numel(y)) with a fixed random r.
template <typename T>
Var<T> project(const Var<T>& y, std::uint64_t seed) {
  Rng rng(seed);
  Var<T> r(random_tensor<T>(y.shape(), rng));
  return affine(sum(mul(y, r)), 1.0 / std::sqrt(static_cast<double>(y.value().size())));
}

template <typename T>
const char* type_name() {
  return sizeof(T) == 4 ? "float" : "double";
}

// ---------------------------------------------------------------------------
// gradient checks

template <typename T>
struct GradCase {
  std::string name;
  std::function<void(Checks&, const std::string&, double tol)> run;
};

template <typename T>
void report_grad(Checks& out, const std::string& name, ParamStore<T>& store, const ScalarFn<T>& f, double tol) {
  GradCheckReport rep;
  try {
    rep = grad_check<T>(f, store, default_grad_eps(T()), 42, 32, sizeof(T) == 4 ? 4 : 0);
  } catch (const std::exception& e) {
    out.push_back(check(name, false, e.what()));
    return;
  }
  std::string worst;
  double worst_err = -1;
  for (const auto& e : rep.entries)
    if (e.max_rel_error > worst_err) {
      worst_err = e.max_rel_error;
      worst = e.name;
    }
  out.push_back(check(name, rep.ok(tol),
                      rep.failure.empty() ? "max rel err " + fmt(rep.max_rel_error) + " (" + worst + ")"
                                          : rep.failure));
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 8;
  c.classes = 3;
  c.style_dim = 3;
  c.base_width = 2;
  c.depth = 2;
  c.spatn_blocks = 1;
  c.disc_depth = 2;
  c.res_blocks = 1;
  c.sean_hidden = 3;
  c.sean_kernel = 3;
  c.distance_maps = false;
  c.seed = 11;
  return c;
}

template <typename T>
void grad_cases(Checks& out) {
  const double tol = sizeof(T) == 4 ? 1e-3 : 1e-5;
  const std::string suffix = std::string(" [") + type_name<T>() + "]";
  Rng rng(sizeof(T) == 4 ? 1001 : 2002);
  const Initializer init(7);

  auto unary = [&](const std::string& name, std::function<Var<T>(const Var<T>&)> op, bool away_from_zero) {
    ParamStore<T> s;
    s.add("x", away_from_zero ? signed_away_from_zero<T>({2, 4, 8, 8}, rng) : random_tensor<T>({2, 4, 8, 8}, rng));
    report_grad<T>(out, name + suffix, s, [op](ParamStore<T>& p) { return project(op(p.get("x")), 1); }, tol);
  };
  unary("relu", [](const Var<T>& x) { return relu(x); }, true);
  unary("leaky_relu", [](const Var<T>& x) { return leaky_relu(x, 0.2); }, true);
  unary("tanh", [](const Var<T>& x) { return spg::tanh(x); }, false);
  unary("sigmoid", [](const Var<T>& x) { return sigmoid(x); }, false);
  unary("softmax_channels", [](const Var<T>& x) { return softmax_channels(x); }, false);
  unary("affine", [](const Var<T>& x) { return affine(x, -1.5, 0.25); }, false);
  unary("avg_pool2d", [](const Var<T>& x) { return avg_pool2d(x, 2); }, false);
  unary("downsample_nearest", [](const Var<T>& x) { return downsample_nearest(x, 2); }, false);
  unary("instance_normalize", [](const Var<T>& x) { return instance_normalize(x); }, false);
  unary("pixel_shuffle", [](const Var<T>& x) { return pixel_shuffle(x, 2); }, false);
  unary("pixel_unshuffle", [](const Var<T>& x) { return pixel_unshuffle(x, 2); }, false);
  unary("sum", [](const Var<T>& x) { return sum(x); }, false);
  unary("mean", [](const Var<T>& x) { return mean(x); }, false);

  {
    ParamStore<T> s;
    s.add("a", random_tensor<T>({2, 4, 8, 8}, rng));
    s.add("b", random_tensor<T>({2, 3, 8, 8}, rng));
    s.add("c", random_tensor<T>({2, 4, 8, 8}, rng));
    s.add("m", random_tensor<T>({2, 1, 8, 8}, rng, 0, 1));
    report_grad<T>(out, "binary ops" + suffix, s,
                   [](ParamStore<T>& p) {
                     Var<T> a = p.get("a"), c = p.get("c");
                     Var<T> y = concat_channels<T>({add(a, c), sub(a, c), mul(a, c), p.get("b"),
                                                    mul_channel_broadcast(a, p.get("m"))});
                     return project(y, 2);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("theta", Tensor<T>(Shape{1, 1, 1, 1}, T(0.3)));
    s.add("a", random_tensor<T>({2, 4, 8, 8}, rng));
    s.add("b", random_tensor<T>({2, 4, 8, 8}, rng));
    report_grad<T>(out, "sigmoid_blend" + suffix, s,
                   [](ParamStore<T>& p) { return project(sigmoid_blend(p.get("theta"), p.get("a"), p.get("b")), 3); },
                   tol);
  }
  for (auto [k, stride, pad] : {std::array<int, 3>{3, 1, 1}, {4, 2, 1}, {1, 1, 0}}) {
    ParamStore<T> s;
    s.add("x", random_tensor<T>({2, 3, 8, 8}, rng));
    s.add("w", random_tensor<T>({4, 3, k, k}, rng));
    s.add("b", random_tensor<T>({1, 4, 1, 1}, rng));
    report_grad<T>(out, "conv2d k" + std::to_string(k) + " s" + std::to_string(stride) + suffix, s,
                   [stride, pad](ParamStore<T>& p) {
                     return project(conv2d(p.get("x"), p.get("w"), p.get("b"), stride, pad), 4);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("x", random_tensor<T>({2, 4, 4, 4}, rng));
    s.add("w", random_tensor<T>({4, 3, 3, 3}, rng));
    s.add("b", random_tensor<T>({1, 3, 1, 1}, rng));
    report_grad<T>(out, "conv_transpose2d" + suffix, s,
                   [](ParamStore<T>& p) {
                     return project(conv_transpose2d(p.get("x"), p.get("w"), p.get("b"), 2, 1, 1), 5);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("x", random_tensor<T>({2, 4, 8, 8}, rng, -2, 3));
    s.add("gamma", random_tensor<T>({1, 4, 1, 1}, rng, 0.5, 1.5));
    s.add("beta", random_tensor<T>({1, 4, 1, 1}, rng));
    auto rm = std::make_shared<Tensor<T>>(Shape{1, 4, 1, 1});
    auto rv = std::make_shared<Tensor<T>>(Shape{1, 4, 1, 1}, T(1));
    report_grad<T>(out, "batch_norm" + suffix, s,
                   [rm, rv](ParamStore<T>& p) {
                     return project(batch_norm(p.get("x"), p.get("gamma"), p.get("beta"), *rm, *rv, true), 6);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("x", random_tensor<T>({2, 3, 8, 8}, rng));
    s.add("flow", random_tensor<T>({2, 2, 8, 8}, rng, -1.6, 1.6));
    report_grad<T>(out, "grid_sample_bilinear" + suffix, s,
                   [](ParamStore<T>& p) { return project(grid_sample_bilinear(p.get("x"), p.get("flow")), 7); }, tol);
  }
  {
    ParamStore<T> s;
    s.add("z", random_tensor<T>({2, 4, 8, 8}, rng, -2, 2));
    std::vector<SemanticMap> maps{random_map(8, 8, 4, rng), random_map(8, 8, 4, rng)};
    report_grad<T>(out, "cross_entropy" + suffix, s,
                   [maps](ParamStore<T>& p) {
                     return cross_entropy(softmax_channels(p.get("z")), std::span<const SemanticMap>(maps));
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("a", random_tensor<T>({2, 3, 8, 8}, rng, 0, 1));
    s.add("b", random_tensor<T>({2, 3, 8, 8}, rng, 0, 1));
    report_grad<T>(out, "l1_loss" + suffix, s, [](ParamStore<T>& p) { return l1_loss(p.get("a"), p.get("b")); },
                   tol);
    auto fx = std::make_shared<FeatureExtractor<T>>();
    report_grad<T>(out, "perceptual_loss" + suffix, s,
                   [fx](ParamStore<T>& p) { return perceptual_loss(p.get("a"), p.get("b"), *fx); }, tol);
  }
  {
    ParamStore<T> s;
    s.add("real", random_tensor<T>({2, 1, 4, 4}, rng, -3, 3));
    s.add("fake", random_tensor<T>({2, 1, 4, 4}, rng, -3, 3));
    report_grad<T>(out, "adversarial_losses" + suffix, s,
                   [](ParamStore<T>& p) {
                     auto adv = adversarial_losses(p.get("real"), p.get("fake"));
                     return add(adv.discriminator, affine(adv.generator, 0.7));
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("ce", Tensor<T>(Shape{1, 1, 1, 1}, T(0.1)));
    s.add("l1", Tensor<T>(Shape{1, 1, 1, 1}, T(0.2)));
    s.add("perc", Tensor<T>(Shape{1, 1, 1, 1}, T(0.3)));
    s.add("adv", Tensor<T>(Shape{1, 1, 1, 1}, T(0.4)));
    report_grad<T>(out, "full_objective" + suffix, s,
                   [](ParamStore<T>& p) {
                     auto sq = [](const Var<T>& v) { return mul(v, v); };
                     LossParts<T> parts{sq(p.get("ce")), sq(p.get("l1")), sq(p.get("perc")), sq(p.get("adv"))};
                     return full_objective(parts, LossWeights{});
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    s.add("features", random_tensor<T>({2, 3, 8, 8}, rng));
    s.add("z", random_tensor<T>({2, 4, 8, 8}, rng, -2, 2));
    std::vector<SemanticMap> maps{random_map(8, 8, 4, rng), random_map(8, 8, 4, rng)};
    report_grad<T>(out, "region_pool + style_broadcast" + suffix, s,
                   [maps](ParamStore<T>& p) {
                     auto codes = region_average_pool(p.get("features"), std::span<const SemanticMap>(maps));
                     return project(style_broadcast(codes, softmax_channels(p.get("z"))), 8);
                   },
                   tol);
  }

  // Model blocks.
  const ModelConfig cfg = tiny_config();
  {
    ParamStore<T> s;
    ResidualBlock<T> block(s, "res", 3, 4, init);
    s.add("input", random_tensor<T>({2, 3, 8, 8}, rng));
    report_grad<T>(out, "ResidualBlock" + suffix, s,
                   [&block](ParamStore<T>& p) { return project(block(p.get("input"), Mode{true}), 9); }, tol);
  }
  for (int kernel : {3, 1}) {
    ParamStore<T> s;
    Sean<T> sean(s, "sean", SeanConfig{4, 3, 3, 3, kernel}, init);
    s.get("sean.theta_alpha").mutable_value()[0] = T(0.4);
    s.get("sean.theta_beta").mutable_value()[0] = T(-0.3);
    s.add("h", random_tensor<T>({2, 4, 8, 8}, rng));
    s.add("sem", random_tensor<T>({2, 3, 8, 8}, rng, 0, 1));
    s.add("style", random_tensor<T>({2, 3, 8, 8}, rng));
    report_grad<T>(out, "SEAN k" + std::to_string(kernel) + suffix, s,
                   [&sean](ParamStore<T>& p) { return project(sean(p.get("h"), p.get("sem"), p.get("style")), 10); },
                   tol);
  }
  {
    ParamStore<T> s;
    SpgBlock<T> block(s, "blk", 3, 4, cfg, init);
    s.add("prev", random_tensor<T>({2, 3, 8, 8}, rng));
    s.add("app", random_tensor<T>({2, 2, 8, 8}, rng));
    s.add("pose", random_tensor<T>({2, 2, 8, 8}, rng));
    s.add("sem", random_tensor<T>({2, 3, 8, 8}, rng, 0, 1));
    s.add("style", random_tensor<T>({2, 3, 8, 8}, rng));
    report_grad<T>(out, "SPGBlock" + suffix, s,
                   [&block](ParamStore<T>& p) {
                     return project(block(p.get("prev"), p.get("app"), p.get("pose"), p.get("sem"), p.get("style")),
                                    11);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    FeatureWarp<T> warp(s, "warp", 3, init);
    s.add("features", random_tensor<T>({2, 3, 8, 8}, rng));
    FlowField<T> flow{random_tensor<T>({2, 2, 8, 8}, rng, -1.6, 1.6), Tensor<T>(Shape{2, 1, 8, 8})};
    for (auto& v : flow.vis.values()) v = rng.uniform() < 0 ? T(0) : T(1);
    report_grad<T>(out, "feature_warp" + suffix, s,
                   [&warp, flow](ParamStore<T>& p) { return project(warp(p.get("features"), flow, Mode{true}), 12); },
                   tol);
  }
  {
    Spatn<T> net(cfg);
    auto& s = net.params();
    s.add("input.semantic", random_tensor<T>({2, 4, 4, 4}, rng));
    s.add("input.pose", random_tensor<T>({2, 4, 4, 4}, rng));
    report_grad<T>(out, "SPATN block" + suffix, s,
                   [&net](ParamStore<T>& p) {
                     auto [f_s, f_p] = net.transfer_block(0, p.get("input.semantic"), p.get("input.pose"), Mode{true});
                     return add(project(f_s, 13), project(f_p, 14));
                   },
                   tol);
  }
  {
    Spatn<T> net(cfg);
    auto& s = net.params();
    const int pc = cfg.pose_channels();
    s.add("input.pose_s", random_tensor<T>({1, pc, 8, 8}, rng, 0, 1));
    s.add("input.pose_t", random_tensor<T>({1, pc, 8, 8}, rng, 0, 1));
    s.add("input.source", random_tensor<T>({1, cfg.classes, 8, 8}, rng, 0, 1));
    report_grad<T>(out, "SPATN" + suffix, s,
                   [&net](ParamStore<T>& p) {
                     return project(net(p.get("input.pose_s"), p.get("input.pose_t"), p.get("input.source"), Mode{true}),
                                    15);
                   },
                   tol);
  }
  {
    Discriminator<T> disc(cfg);
    auto& s = disc.params();
    s.add("input.image", random_tensor<T>({1, 3, 8, 8}, rng, 0, 1));
    s.add("input.source", random_tensor<T>({1, 3, 8, 8}, rng, 0, 1));
    s.add("input.pose", random_tensor<T>({1, cfg.pose_channels(), 8, 8}, rng, 0, 1));
    report_grad<T>(out, "discriminator" + suffix, s,
                   [&disc](ParamStore<T>& p) {
                     return project(disc(p.get("input.image"), p.get("input.source"), p.get("input.pose")), 16);
                   },
                   tol);
  }
  {
    ParamStore<T> s;
    StyleEncoder<T> enc(s, "style", cfg, init);
    s.add("image", random_tensor<T>({1, 3, 8, 8}, rng, 0, 1));
    std::vector<SemanticMap> maps{random_map(8, 8, 3, rng)};
    report_grad<T>(out, "style encoder" + suffix, s,
                   [&enc, maps](ParamStore<T>& p) {
                     return project(enc(p.get("image"), std::span<const SemanticMap>(maps)).codes, 17);
                   },
                   tol);
  }
  {
    SpgNet<T> net(cfg);
    auto& s = net.params();
    std::vector<SemanticMap> maps{random_map(8, 8, 3, rng)};
    FlowField<T> flow{random_tensor<T>({1, 2, 8, 8}, rng, -1.6, 1.6), Tensor<T>(Shape{1, 1, 8, 8}, T(1))};
    s.add("input.pose", random_tensor<T>({1, cfg.pose_channels(), 8, 8}, rng, 0, 1));
    s.add("input.source", random_tensor<T>({1, 3, 8, 8}, rng, 0, 1));
    s.add("input.target", one_hot<T>(random_map(8, 8, 3, rng)), false);
    report_grad<T>(out, "SPGNet" + suffix, s,
                   [&net, maps, flow](ParamStore<T>& p) {
                     return project(net(p.get("input.pose"), p.get("input.source"), std::span<const SemanticMap>(maps),
                                        p.get("input.target"), flow, Mode{true}),
                                    18);
                   },
                   tol);
  }
}

}  // namespace

Checks grad_checks() {
  Checks out;
  grad_cases<float>(out);
  grad_cases<double>(out);
  return out;
}

// ---------------------------------------------------------------------------

Checks distance_map_checks() {
  Checks out;
  Rng rng(303);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double ax = rng.uniform(0, 32), ay = rng.uniform(0, 32), bx = rng.uniform(0, 32), by = rng.uniform(0, 32);
    const double px = rng.uniform(-4, 36), py = rng.uniform(-4, 36);
    const double len = std::hypot(bx - ax, by - ay);
    const int samples = std::max(1, static_cast<int>(std::ceil(len * 1e4)));
    const double closed = point_segment_distance(px, py, ax, ay, bx, by);
    worst = std::max(worst, std::abs(closed - oracle::sampled_segment_distance(px, py, ax, ay, bx, by, samples)));
  }
  out.push_back(check("point-segment distance vs dense sampling (1000 cases)", worst <= 1e-4, "max err " + fmt(worst)));
  {
    double deg = point_segment_distance(3, 4, 0, 0, 0, 0);
    out.push_back(check("degenerate segment is point distance", std::abs(deg - 5.0) < 1e-12, fmt(deg)));
  }

  const LimbSet& limbs = LimbSet::standard();
  const auto [ja, jb] = limbs[0];
  Keypoints kp{};
  kp[ja] = {5, 0, true};
  kp[jb] = {5, 20, true};
  const Tensor<float> dm = distance_map(kp, limbs, 32, 32);
  out.push_back(check("distance map is 1 on the limb", dm(0, 0, 10, 5) == 1.0f, fmt(dm(0, 0, 10, 5))));
  const double at10 = dm(0, 0, 10, 15);
  out.push_back(check("distance map at d=10, kappa=-0.1 is exp(-1)", std::abs(at10 - 0.367879) <= 1e-6, fmt(at10)));
  bool zero = true;
  for (std::size_t l = 1; l < limbs.size(); ++l)
    for (int i = 0; i < 32 * 32; ++i) zero = zero && dm.plane(0, static_cast<int>(l))[i] == 0.0f;
  kp[jb].visible = false;
  const Tensor<float> dm2 = distance_map(kp, limbs, 32, 32);
  for (int i = 0; i < 32 * 32; ++i) zero = zero && dm2.plane(0, 0)[i] == 0.0f;
  out.push_back(check("limbs with an invisible endpoint give zero channels", zero));

  Keypoints one{};
  one[kNeck] = {7, 9, true};
  const Tensor<float> hm = render_heatmaps(one, 16, 16, default_heatmap_sigma(16));
  bool others_zero = true;
  for (int c = 0; c < kNumJoints; ++c)
    if (c != kNeck)
      for (int i = 0; i < 256; ++i) others_zero = others_zero && hm.plane(0, c)[i] == 0.0f;
  out.push_back(check("heatmap peaks at the joint; invisible joints are zero", hm(0, kNeck, 9, 7) == 1.0f && others_zero));
  const Tensor<float> pose = build_pose_tensor(one, limbs, 16, 16, 1.0);
  const Tensor<float> pose18 = build_pose_tensor(one, limbs, 16, 16, 1.0, kDefaultKappa, false);
  out.push_back(check("pose tensor has 30 channels, 18 without distance maps",
                      pose.shape().c == kPoseChannels && pose18.shape().c == kNumJoints));
  return out;
}

// ---------------------------------------------------------------------------

Checks sean_checks() {
  Checks out;
  Rng rng(404);
  const Initializer init(9);
  // identity affine: zero head weights, alpha bias 1, beta bias 0
  {
    ParamStore<float> s;
    Sean<float> sean(s, "sean", SeanConfig{4, 3, 5, 6, 3}, init);
    for (auto* path : {&sean.semantic_path(), &sean.style_path()}) {
      zero_fill(path->alpha_head().weight());
      zero_fill(path->beta_head().weight());
      zero_fill(path->beta_head().bias());
      path->alpha_head().bias().mutable_value().fill(1.0f);
    }
    Var<float> h(random_tensor<float>({2, 4, 8, 8}, rng, -3, 7));
    Var<float> sem(one_hot_batch<float>(std::vector<SemanticMap>{random_map(8, 8, 3, rng), random_map(8, 8, 3, rng)}));
    Var<float> style(random_tensor<float>({2, 5, 8, 8}, rng));
    const Tensor<float> y = sean(h, sem, style).value();
    double worst_mean = 0, worst_std = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 4; ++c) {
        double m = 0, v = 0;
        for (int i = 0; i < 64; ++i) m += y.plane(n, c)[i];
        m /= 64;
        for (int i = 0; i < 64; ++i) v += (y.plane(n, c)[i] - m) * (y.plane(n, c)[i] - m);
        worst_mean = std::max(worst_mean, std::abs(m));
        worst_std = std::max(worst_std, std::abs(std::sqrt(v / 64) - 1.0));
      }
    out.push_back(check("post-normalization mean per (n,c) <= 1e-4", worst_mean <= 1e-4, fmt(worst_mean)));
    out.push_back(check("post-normalization std per (n,c) within 1e-3 of 1", worst_std <= 1e-3, fmt(worst_std)));
  }
  // region locality with 1x1 paths
  {
    ParamStore<float> s;
    Sean<float> sean(s, "sean", SeanConfig{4, 3, 5, 6, 1}, init);
    s.get("sean.theta_alpha").mutable_value()[0] = 0.2f;
    s.get("sean.theta_beta").mutable_value()[0] = -0.5f;
    std::vector<SemanticMap> maps{random_map(8, 8, 3, rng)};
    Var<float> h(random_tensor<float>({1, 4, 8, 8}, rng));
    Var<float> sem(one_hot_batch<float>(maps));
    auto codes = region_average_pool(Var<float>(random_tensor<float>({1, 5, 8, 8}, rng)), std::span<const SemanticMap>(maps));
    const Tensor<float> before = sean(h, sem, style_broadcast(codes, std::span<const SemanticMap>(maps))).value();
    const int r = 1;
    for (int d = 0; d < 5; ++d) codes.codes.mutable_value()(0, r, d, 0) += 0.75f;
    const Tensor<float> after = sean(h, sem, style_broadcast(codes, std::span<const SemanticMap>(maps))).value();
    bool outside_same = true, inside_changed = false;
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const bool same = before(0, c, y, x) == after(0, c, y, x);
          if (maps[0].at(y, x) != r) outside_same = outside_same && same;
          else inside_changed = inside_changed || !same;
        }
    out.push_back(check("1x1 paths: changing code r leaves pixels outside r bit-identical", outside_same));
    out.push_back(check("1x1 paths: changing code r changes pixels inside r", inside_changed));
  }
  // theta endpoints
  {
    ParamStore<double> s;
    Sean<double> sean(s, "sean", SeanConfig{4, 3, 5, 6, 3}, Initializer(10));
    Var<double> h(random_tensor<double>({2, 4, 8, 8}, rng));
    Var<double> sem(random_tensor<double>({2, 3, 8, 8}, rng, 0, 1));
    Var<double> style(random_tensor<double>({2, 5, 8, 8}, rng));
    auto max_diff = [](const Tensor<double>& a, const Tensor<double>& b) {
      double m = 0;
      for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
      return m;
    };
    sean.theta_alpha().mutable_value()[0] = 60;
    sean.theta_beta().mutable_value()[0] = 60;
    const double d_sem = max_diff(sean(h, sem, style).value(), sean.spade(h, sem).value());
    out.push_back(check("theta -> +inf reproduces semantic-only modulation", d_sem <= 1e-12, fmt(d_sem)));
    sean.theta_alpha().mutable_value()[0] = -60;
    sean.theta_beta().mutable_value()[0] = -60;
    auto sty = sean.style_path()(style);
    const Tensor<double> style_only = add(mul(sty.alpha, instance_normalize(h)), sty.beta).value();
    const double d_sty = max_diff(sean(h, sem, style).value(), style_only);
    out.push_back(check("theta -> -inf reproduces style-only modulation", d_sty <= 1e-12, fmt(d_sty)));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checks warp_checks() {
  Checks out;
  Rng rng(505);
  const Tensor<double> x = random_tensor<double>({2, 3, 8, 9}, rng);
  {
    const Tensor<double> y = grid_sample_bilinear(Var<double>(x), Var<double>(Tensor<double>(Shape{2, 2, 8, 9}))).value();
    out.push_back(check("zero flow is the identity (exact)", y == x));
  }
  {
    bool exact = true;
    for (auto [dx, dy] : {std::pair{2, -1}, {-3, 0}, {0, 4}, {-1, -2}}) {
      Tensor<double> flow(Shape{2, 2, 8, 9});
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 72; ++i) {
          flow.plane(n, 0)[i] = dx;
          flow.plane(n, 1)[i] = dy;
        }
      const Tensor<double> y = grid_sample_bilinear(Var<double>(x), Var<double>(flow)).value();
      for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
          for (int yy = 0; yy < 8; ++yy)
            for (int xx = 0; xx < 9; ++xx) {
              const int sy = yy + dy, sx = xx + dx;
              const double want = (sy < 0 || sy >= 8 || sx < 0 || sx >= 9) ? 0.0 : x(n, c, sy, sx);
              exact = exact && y(n, c, yy, xx) == want;
            }
    }
    out.push_back(check("integer shifts match the shift oracle exactly (zero border)", exact));
  }
  {
    const Tensor<double> flow = random_tensor<double>({2, 2, 8, 9}, rng, -3, 3);
    const Tensor<double> y = grid_sample_bilinear(Var<double>(x), Var<double>(flow)).value();
    double worst = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < 8; ++yy)
          for (int xx = 0; xx < 9; ++xx)
            worst = std::max(worst, std::abs(y(n, c, yy, xx) - oracle::bilinear(x, n, c, xx + flow(n, 0, yy, xx),
                                                                                   yy + flow(n, 1, yy, xx))));
    out.push_back(check("fractional flow matches the bilinear oracle", worst <= 1e-12, fmt(worst)));
  }
  {
    FlowField<float> flow{random_tensor<float>({2, 2, 8, 9}, rng, -2, 2), Tensor<float>(Shape{2, 1, 8, 9})};
    for (auto& v : flow.vis.values()) v = rng.uniform() < 0 ? 0.0f : 1.0f;
    auto br = warp_branches(Var<float>(random_tensor<float>({2, 3, 8, 9}, rng)), flow);
    const Tensor<float> total = add(br.visible, br.invisible).value();
    out.push_back(check("visible + invisible branches equal the warped feature exactly", total == br.warped.value()));
  }
  {
    SynthConfig sc;
    sc.pairs = 40;
    sc.size = 64;
    sc.seed = 17;
    sc.crossed_fraction = 0.5;
    double worst = 0;
    for (const auto& s : synth_dataset(sc)) {
      const Tensor<float> w = grid_sample_bilinear(Var<float>(s.source_image), Var<float>(s.flow.phi)).value();
      double err = 0;
      int count = 0;
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 64 * 64; ++i)
          if (s.flow.vis.plane(0, 0)[i] > 0.5f) {
            err += std::abs(w.plane(0, c)[i] - s.target_image.plane(0, c)[i]);
            ++count;
          }
      worst = std::max(worst, count ? err / count : 0.0);
    }
    out.push_back(check("ground-truth flow warps source to target, MAE <= 0.02 on visible pixels", worst <= 0.02,
                        "worst sample MAE " + fmt(worst)));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checks region_checks() {
  Checks out;
  Rng rng(606);
  std::vector<SemanticMap> maps{random_map(8, 8, 5, rng), random_map(8, 8, 5, rng)};
  maps[1].labels().assign(64, 2);  // only region 2 present in sample 1
  {
    Tensor<float> f(Shape{2, 3, 8, 8});
    std::vector<float> level(15);
    for (auto& v : level) v = static_cast<float>(rng.uniform());
    for (int n = 0; n < 2; ++n)
      for (int d = 0; d < 3; ++d)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) f(n, d, y, x) = level[maps[n].at(y, x) * 3 + d];
    auto codes = region_average_pool(Var<float>(f), std::span<const SemanticMap>(maps));
    bool exact = true;
    for (int n = 0; n < 2; ++n)
      for (int l = 0; l < 5; ++l)
        for (int d = 0; d < 3; ++d)
          if (codes.present[static_cast<std::size_t>(n) * 5 + l]) exact = exact && codes.codes.value()(n, l, d, 0) == level[l * 3 + d];
    out.push_back(check("constant regions pool to their value exactly", exact));
    bool absent_zero = true;
    for (int l = 0; l < 5; ++l)
      if (l != 2)
        for (int d = 0; d < 3; ++d)
          absent_zero = absent_zero && !codes.present[5 + l] && codes.codes.value()(1, l, d, 0) == 0.0f;
    out.push_back(check("absent regions are flagged and carry zero codes", absent_zero && codes.present[5 + 2]));
  }
  {
    const Tensor<double> f = random_tensor<double>({2, 4, 8, 8}, rng);
    auto codes = region_average_pool(Var<double>(f), std::span<const SemanticMap>(maps));
    const Tensor<double> ref = oracle::region_means(f, maps);
    double worst = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - codes.codes.value()[i]));
    out.push_back(check("region means match the brute-force oracle", worst <= 1e-6, fmt(worst)));

    std::vector<SemanticMap> target{random_map(8, 8, 5, rng), random_map(8, 8, 5, rng)};
    const Tensor<double> map = style_broadcast(codes, std::span<const SemanticMap>(target)).value();
    bool piecewise = true;
    for (int n = 0; n < 2; ++n)
      for (int d = 0; d < 4; ++d)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) piecewise = piecewise && map(n, d, y, x) == codes.codes.value()(n, target[n].at(y, x), d, 0);
    out.push_back(check("style broadcast is exactly the region code at every pixel", piecewise));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checks metric_checks() {
  Checks out;
  Rng rng(707);
  const Tensor<float> x = random_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
  const double self = ssim(x, x);
  out.push_back(check("ssim(x, x) = 1", std::abs(self - 1.0) <= 1e-9, fmt(self)));
  {
    const double m1 = 0.3, m2 = 0.7;
    const double got = ssim(Tensor<float>(Shape{1, 3, 16, 16}, float(m1)), Tensor<float>(Shape{1, 3, 16, 16}, float(m2)));
    const double want = oracle::constant_ssim(static_cast<float>(m1), static_cast<float>(m2));
    out.push_back(check("constant images match the closed form", std::abs(got - want) <= 1e-9,
                        fmt(got) + " vs " + fmt(want)));
  }
  {
    const Tensor<float> y = random_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
    out.push_back(check("ssim is symmetric", std::abs(ssim(x, y) - ssim(y, x)) <= 1e-9));
  }
  {
    const double amps[] = {0.02, 0.05, 0.1, 0.2, 0.4};
    std::vector<double> means;
    for (double a : amps) {
      double total = 0;
      for (int seed = 0; seed < 20; ++seed) {
        Rng r(1000 + seed);
        const Tensor<float> base = random_tensor<float>({1, 1, 24, 24}, r, 0.2, 0.8);
        Tensor<float> noisy = base;
        for (auto& v : noisy.values()) v = std::clamp(v + static_cast<float>(r.uniform(-a, a)), 0.0f, 1.0f);
        total += ssim(base, noisy);
      }
      means.push_back(total / 20);
    }
    bool mono = true;
    for (std::size_t i = 1; i < means.size(); ++i) mono = mono && means[i] < means[i - 1];
    out.push_back(check("mean ssim over 20 seeds decreases with noise amplitude", mono,
                        fmt(means.front()) + " .. " + fmt(means.back())));
  }
  {
    const Tensor<float> y = random_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
    const double plain = ssim(x, y);
    const double ones = masked_ssim(x, y, Tensor<float>(Shape{1, 1, 32, 32}, 1.0f));
    out.push_back(check("all-ones mask equals plain ssim", std::abs(plain - ones) <= 1e-12));
    Tensor<float> mask(Shape{1, 1, 32, 32});
    for (int yy = 8; yy < 24; ++yy)
      for (int xx = 8; xx < 24; ++xx) mask(0, 0, yy, xx) = 1.0f;
    Tensor<float> z = x;
    for (int c = 0; c < 3; ++c)
      for (int yy = 0; yy < 32; ++yy)
        for (int xx = 0; xx < 32; ++xx)
          if (mask(0, 0, yy, xx) == 0.0f) z(0, c, yy, xx) = static_cast<float>(rng.uniform(0, 1));
    out.push_back(check("differences outside the mask give masked ssim 1", std::abs(masked_ssim(x, z, mask) - 1.0) <= 1e-9));
    out.push_back(check("all-zero mask gives 1", std::abs(masked_ssim(x, y, Tensor<float>(Shape{1, 1, 32, 32})) - 1.0) <= 1e-9));
  }
  {
    const SemanticMap a = random_map(16, 16, 6, rng);
    out.push_back(check("miou(pred == truth) = 1", miou(a, a, 6) == 1.0));
    const SemanticMap one(8, 8, 4, 1), three(8, 8, 4, 3);
    out.push_back(check("disjoint single-class maps give miou 0", miou(one, three, 4) == 0.0));
    SemanticMap half(8, 8, 2, 0), truth(8, 8, 2, 0);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        half.at(y, x) = x < 4 ? 1 : 0;
        truth.at(y, x) = y < 4 ? 1 : 0;
      }
    // each class: intersection 16, union 48
    const double got = miou(half, truth, 2);
    out.push_back(check("half-overlap two-class case matches the counting oracle",
                        got == oracle::miou(half, truth, 2) && std::abs(got - 1.0 / 3.0) < 1e-15, fmt(got)));
    bool exact = true;
    for (int i = 0; i < 20; ++i) {
      const SemanticMap p = random_map(12, 10, 7, rng), t = random_map(12, 10, 7, rng);
      exact = exact && miou(p, t, 7) == oracle::miou(p, t, 7);
    }
    out.push_back(check("random maps: miou equals the counting oracle exactly", exact));
  }
  {
    LossParts<double> parts{Var<double>(Tensor<double>(Shape{1, 1, 1, 1}, 0.1)),
                            Var<double>(Tensor<double>(Shape{1, 1, 1, 1}, 0.2)),
                            Var<double>(Tensor<double>(Shape{1, 1, 1, 1}, 0.3)),
                            Var<double>(Tensor<double>(Shape{1, 1, 1, 1}, 0.4))};
    const double v = full_objective(parts, LossWeights{}).item();
    out.push_back(check("weighted objective with default weights on (0.1,0.2,0.3,0.4) = 1.504",
                        std::abs(v - 1.504) <= 1e-12, fmt(v)));
    const double z = full_objective(parts, LossWeights{0, 0, 0, 0}).item();
    out.push_back(check("all-zero weights give 0", z == 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checks loss_checks() {
  Checks out;
  Rng rng(808);
  {
    const Tensor<double> a = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1);
    Tensor<double> b = a;
    for (auto& v : b.values()) v += 0.5;
    out.push_back(check("l1(a, a) = 0", l1_loss(Var<double>(a), Var<double>(a)).item() == 0.0));
    out.push_back(check("l1(a, a + 0.5) = 0.5", std::abs(l1_loss(Var<double>(a), Var<double>(b)).item() - 0.5) <= 1e-12));
    const Tensor<double> c = random_tensor<double>({2, 3, 8, 8}, rng, 0, 1);
    const double err = std::abs(l1_loss(Var<double>(a), Var<double>(c)).item() - oracle::l1(a, c));
    out.push_back(check("l1 matches the scalar loop oracle", err <= 1e-6, fmt(err)));
  }
  {
    FeatureExtractor<double> fx;
    const Tensor<double> a = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);
    const Tensor<double> b = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);
    out.push_back(check("perceptual(a, a) = 0", perceptual_loss(Var<double>(a), Var<double>(a), fx).item() == 0.0));
    const double ab = perceptual_loss(Var<double>(a), Var<double>(b), fx).item();
    const double ba = perceptual_loss(Var<double>(b), Var<double>(a), fx).item();
    out.push_back(check("perceptual loss is symmetric", std::abs(ab - ba) <= 1e-12 * std::max(1.0, ab)));
    const double ref = oracle::perceptual(a, b, fx);
    out.push_back(check("perceptual loss matches per-stage recomputation", std::abs(ab - ref) <= 1e-5, fmt(ab) + " vs " + fmt(ref)));
    out.push_back(check("feature extractor has 4 stages", fx.stages() == FeatureExtractor<double>::kStages));
  }
  {
    Var<double> zero(Tensor<double>(Shape{1, 1, 4, 4}));
    auto adv = adversarial_losses(zero, zero);
    out.push_back(check("D = 0.5 on both gives L_D = 2 ln 2",
                        std::abs(adv.discriminator.item() - 2 * std::numbers::ln2) <= 1e-12, fmt(adv.discriminator.item())));
    Var<double> real(Tensor<double>(Shape{1, 1, 4, 4}, 50.0)), fake(Tensor<double>(Shape{1, 1, 4, 4}, -50.0));
    const double confident = adversarial_losses(real, fake).discriminator.item();
    const double want = -2 * std::log(1 - kProbClamp);
    out.push_back(check("confident correct D gives the clamp value", std::abs(confident - want) <= 1e-12, fmt(confident)));
    double prev = std::numeric_limits<double>::infinity();
    bool mono = true;
    for (double z = -6; z <= 6; z += 0.5) {
      const double g = adversarial_losses(zero, Var<double>(Tensor<double>(Shape{1, 1, 2, 2}, z))).generator.item();
      mono = mono && g < prev;
      prev = g;
    }
    out.push_back(check("L_G decreases as D(fake) increases", mono));
  }
  {
    const int classes = 6;
    Tensor<double> uniform(Shape{2, classes, 4, 4}, 1.0 / classes);
    std::vector<SemanticMap> maps{random_map(4, 4, classes, rng), random_map(4, 4, classes, rng)};
    const double ce = cross_entropy(Var<double>(uniform), std::span<const SemanticMap>(maps)).item();
    out.push_back(check("cross-entropy of a uniform prediction is ln C", std::abs(ce - std::log(classes)) <= 1e-12));
    const Tensor<double> probs = softmax_channels(Var<double>(random_tensor<double>({2, classes, 4, 4}, rng, -2, 2))).value();
    const double got = cross_entropy(Var<double>(probs), std::span<const SemanticMap>(maps)).item();
    out.push_back(check("cross-entropy matches the loop oracle", std::abs(got - oracle::cross_entropy(probs, maps)) <= 1e-12));
  }
  {
    bool threw = false;
    try {
      LossWeights{-1, 1, 1, 1}.validate();
    } catch (const ConfigError&) {
      threw = true;
    }
    out.push_back(check("negative loss weight is a config error", threw));
  }
  return out;
}

// ---------------------------------------------------------------------------

Checks op_checks() {
  Checks out;
  Rng rng(909);
  double worst = 0;
  for (auto [k, s, p] : {std::array<int, 3>{3, 1, 1}, {3, 2, 1}, {4, 2, 1}, {7, 1, 3}, {1, 1, 0}, {5, 3, 2}}) {
    const Tensor<double> x = random_tensor<double>({2, 3, 9, 10}, rng);
    const Tensor<double> w = random_tensor<double>({4, 3, k, k}, rng);
    const Tensor<double> b = random_tensor<double>({1, 4, 1, 1}, rng);
    const Tensor<double> got = conv2d(Var<double>(x), Var<double>(w), Var<double>(b), s, p).value();
    const Tensor<double> ref = oracle::conv2d(x, w, b, s, p);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
  }
  out.push_back(check("conv2d matches the loop oracle", worst <= 1e-10, fmt(worst)));
  worst = 0;
  for (auto [k, s, p, op] : {std::array<int, 4>{3, 2, 1, 1}, {3, 1, 1, 0}, {4, 2, 1, 0}}) {
    const Tensor<double> x = random_tensor<double>({2, 3, 5, 4}, rng);
    const Tensor<double> w = random_tensor<double>({3, 2, k, k}, rng);
    const Tensor<double> b = random_tensor<double>({1, 2, 1, 1}, rng);
    const Tensor<double> got = conv_transpose2d(Var<double>(x), Var<double>(w), Var<double>(b), s, p, op).value();
    const Tensor<double> ref = oracle::conv_transpose2d(x, w, b, s, p, op);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
  }
  out.push_back(check("conv_transpose2d matches the scatter oracle", worst <= 1e-10, fmt(worst)));
  {
    const Tensor<float> x = random_tensor<float>({2, 8, 4, 6}, rng);
    const Tensor<float> y = pixel_unshuffle(pixel_shuffle(Var<float>(x), 2), 2).value();
    out.push_back(check("pixel_unshuffle inverts pixel_shuffle", y == x));
  }
  {
    const Tensor<float> x = random_tensor<float>({2, 3, 4, 5}, rng);
    const auto dir = std::filesystem::temp_directory_path() / ("spg_verify_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    save_tensor(dir / "t.spgt", x);
    const bool tensor_ok = load_tensor<float>(dir / "t.spgt") == x;
    ParamStore<float> a, b;
    Conv2d<float> ca(a, "c", 2, 3, 3, 1, 1, true, Initializer(1));
    Conv2d<float> cb(b, "c", 2, 3, 3, 1, 1, true, Initializer(2));
    save_checkpoint(a, dir / "c.ckpt");
    load_checkpoint(b, dir / "c.ckpt");
    const bool ckpt_ok = b.get("c.weight").value() == a.get("c.weight").value();
    bool rejects = false;
    ParamStore<float> other;
    Conv2d<float> co(other, "c", 2, 4, 3, 1, 1, true, Initializer(1));
    try {
      load_checkpoint(other, dir / "c.ckpt");
    } catch (const std::exception&) {
      rejects = true;
    }
    std::filesystem::remove_all(dir);
    out.push_back(check("SPGT tensor round trip is exact", tensor_ok));
    out.push_back(check("checkpoint round trip is exact; mismatched dims rejected", ckpt_ok && rejects));
  }
  return out;
}

Checks synth_checks() {
  Checks out;
  SynthConfig sc;
  sc.pairs = 100;
  sc.size = 32;
  sc.classes = 8;
  sc.seed = 23;
  const auto a = synth_dataset(sc);
  const auto b = synth_dataset(sc);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i)
    same = a[i].source_image == b[i].source_image && a[i].target_map == b[i].target_map && a[i].flow.phi == b[i].flow.phi &&
           a[i].source_kp == b[i].source_kp;
  out.push_back(check("same seed gives identical samples", same));
  std::vector<int> hist(8);
  for (const auto& s : a)
    for (auto l : s.target_map.labels()) ++hist[l];
  bool covered = true;
  for (int h : hist) covered = covered && h > 0;
  out.push_back(check("100 samples cover every class", covered));
  bool order_free = synth_sample(sc, 57).target_image == a[57].target_image;
  out.push_back(check("samples do not depend on generation order", order_free));
  int val = 0;
  for (const auto& s : a) val += s.validation;
  out.push_back(check("10% of identities are held out", val == 10, std::to_string(val) + " validation pairs"));
  return out;
}

Checks run_suite(const std::string& suite) {
  Checks out;
  auto append = [&](Checks c) { out.insert(out.end(), c.begin(), c.end()); };
  const bool all = suite == "all";
  if (!all && suite != "grad" && suite != "invariants" && suite != "oracle")
    throw std::invalid_argument("unknown suite '" + suite + "' (grad|invariants|oracle|all)");
  if (all || suite == "grad") append(grad_checks());
  if (all || suite == "invariants") {
    append(sean_checks());
    append(warp_checks());
    append(region_checks());
    append(synth_checks());
  }
  if (all || suite == "oracle") {
    append(distance_map_checks());
    append(op_checks());
    append(loss_checks());
    append(metric_checks());
  }
  return out;
}

bool all_passed(const Checks& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

void print_checks(std::ostream& os, const Checks& checks) {
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) os << ": " << c.detail;
    os << '\n';
  }
}

}  // namespace spg::verify
