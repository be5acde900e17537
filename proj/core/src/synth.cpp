#include "spg/synth.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "spg/image_io.hpp"
#include "spg/spgt.hpp"

namespace spg {

namespace {

constexpr int kParts = 11;
enum Part { kHair, kFace, kTorso, kRUpperArm, kRLowerArm, kLUpperArm, kLLowerArm, kRUpperLeg, kRLowerLeg, kLUpperLeg, kLLowerLeg };

// back to front
constexpr std::array<int, kParts> kDrawOrder = {kLLowerLeg, kLUpperLeg, kRLowerLeg, kRUpperLeg, kTorso, kHair,
                                                kFace,      kLUpperArm, kLLowerArm, kRUpperArm, kRLowerArm};

struct Vec {
  double x = 0, y = 0;
};
Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(double s, Vec a) { return {s * a.x, s * a.y}; }
Vec dir(double angle) { return {std::cos(angle), std::sin(angle)}; }

struct Identity {
  double torso, neck_head, head_r, upper_arm, lower_arm, upper_leg, lower_leg;
  double shoulder, hip;
  double r_torso, r_upper_arm, r_lower_arm, r_upper_leg, r_lower_leg;
  std::array<std::array<double, 3>, kMaxSynthClasses> color;
  std::array<double, kMaxSynthClasses> period, phase, orient;
  std::array<double, 3> background;
};

// Rigid frame: local = R(-angle) (p - origin); shapes are capsules from
// (0,0) to (length,0) or discs.
struct Frame {
  Vec origin;
  double angle = 0;
  Vec to_local(Vec p) const {
    const Vec d = p - origin;
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }
  Vec to_world(Vec l) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return origin + Vec{c * l.x - s * l.y, s * l.x + c * l.y};
  }
};

struct PartShape {
  Frame frame;
  bool disc = false;
  Vec center;  // disc center, local
  double length = 0;
  double radius = 0;

  bool contains(Vec p) const {
    const Vec l = frame.to_local(p);
    if (disc) return std::hypot(l.x - center.x, l.y - center.y) <= radius;
    const double u = std::clamp(l.x, 0.0, length);
    return std::hypot(l.x - u, l.y) <= radius;
  }
};

struct Pose {
  Keypoints kp;
  std::array<PartShape, kParts> parts;
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

// Explicit mapping so streams match across standard libraries.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Identity make_identity(const SynthConfig& cfg, int id) {
  auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(id), 0x1d);
  const double s = cfg.size;
  auto len = [&](double frac) { return frac * s * uniform(rng, 0.9, 1.1); };
  Identity p{};
  p.torso = len(0.27);
  p.neck_head = len(0.085);
  p.head_r = len(0.07);
  p.upper_arm = len(0.15);
  p.lower_arm = len(0.14);
  p.upper_leg = len(0.19);
  p.lower_leg = len(0.18);
  p.shoulder = len(0.085);
  p.hip = len(0.055);
  p.r_torso = len(0.085);
  p.r_upper_arm = std::max(len(0.035), 1.2);
  p.r_lower_arm = std::max(len(0.03), 1.1);
  p.r_upper_leg = std::max(len(0.045), 1.3);
  p.r_lower_leg = std::max(len(0.038), 1.2);
  for (int l = 0; l < kMaxSynthClasses; ++l) {
    for (auto& c : p.color[l]) c = uniform(rng, 0.12, 0.85);
    p.period[l] = s * uniform(rng, 0.25, 0.45);
    p.phase[l] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    p.orient[l] = uniform(rng, 0.0, std::numbers::pi);
  }
  for (auto& c : p.background) c = uniform(rng, 0.05, 0.95);
  return p;
}

Pose make_pose(const Identity& id, const SynthConfig& cfg, std::mt19937_64& rng) {
  const double s = cfg.size;
  const double pi = std::numbers::pi;
  Pose pose;
  const Vec pelvis{s * 0.5 + uniform(rng, -0.06, 0.06) * s, s * 0.52 + uniform(rng, -0.03, 0.03) * s};
  // Angles are measured in image coordinates; pi/2 points straight down.
  const double torso_angle = -pi / 2 + uniform(rng, -0.15, 0.15);  // pelvis -> neck
  const Vec neck = pelvis + id.torso * dir(torso_angle);
  const Vec across = dir(torso_angle + pi / 2);  // toward image right for an upright body
  const Vec r_shoulder = neck - id.shoulder * across;
  const Vec l_shoulder = neck + id.shoulder * across;
  const Vec r_hip = pelvis - id.hip * across;
  const Vec l_hip = pelvis + id.hip * across;
  const double head_angle = torso_angle + uniform(rng, -0.3, 0.3);
  const Vec head = neck + id.neck_head * dir(head_angle);

  // side = -1 for the figure's right (image left), +1 for its left.
  auto arm = [&](Vec shoulder, double side, Vec& elbow, Vec& wrist) {
    double upper, bend;
    if (uniform(rng, 0.0, 1.0) < cfg.crossed_fraction) {
      upper = uniform(rng, -0.1, 0.35);
      bend = uniform(rng, 1.5, 2.3);
      // fold the forearm toward the midline
      upper = -side * upper;
      bend = -side * bend;
    } else {
      upper = side * uniform(rng, -0.2, 2.4);
      bend = side * uniform(rng, -0.3, 1.6);
    }
    const double a = pi / 2 - upper;
    elbow = shoulder + id.upper_arm * dir(a);
    wrist = elbow + id.lower_arm * dir(a - bend);
  };
  auto leg = [&](Vec hip, double side, Vec& knee, Vec& ankle) {
    const double upper = side * uniform(rng, -0.25, 0.6);
    const double bend = uniform(rng, -0.7, 0.7);
    const double a = pi / 2 - upper;
    knee = hip + id.upper_leg * dir(a);
    ankle = knee + id.lower_leg * dir(a - bend);
  };
  Vec r_elbow, r_wrist, l_elbow, l_wrist, r_knee, r_ankle, l_knee, l_ankle;
  arm(r_shoulder, -1, r_elbow, r_wrist);
  arm(l_shoulder, 1, l_elbow, l_wrist);
  leg(r_hip, -1, r_knee, r_ankle);
  leg(l_hip, 1, l_knee, l_ankle);

  const Frame head_frame{neck, head_angle};
  auto eye = [&](double side_off, double up) { return head_frame.to_world({id.neck_head + up, side_off}); };
  const std::array<Vec, kNumJoints> joints = {
      head, neck, r_shoulder, r_elbow, r_wrist, l_shoulder, l_elbow, l_wrist, r_hip, r_knee, r_ankle, l_hip,
      l_knee, l_ankle,
      eye(-0.35 * id.head_r, 0.2 * id.head_r), eye(0.35 * id.head_r, 0.2 * id.head_r),
      eye(-0.9 * id.head_r, 0.0), eye(0.9 * id.head_r, 0.0)};
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec v = joints[j];
    pose.kp[j] = Keypoint{v.x, v.y, v.x >= 0 && v.y >= 0 && v.x <= s - 1 && v.y <= s - 1};
  }

  auto capsule = [](Vec a, Vec b, double r) {
    PartShape p;
    const Vec d = b - a;
    p.frame = Frame{a, std::atan2(d.y, d.x)};
    p.length = std::hypot(d.x, d.y);
    p.radius = r;
    return p;
  };
  auto disc = [&](Vec center_local, double r) {
    PartShape p;
    p.frame = head_frame;
    p.disc = true;
    p.center = center_local;
    p.radius = r;
    return p;
  };
  pose.parts[kHair] = disc({id.neck_head + 0.22 * id.head_r, 0}, 1.06 * id.head_r);
  pose.parts[kFace] = disc({id.neck_head, 0}, id.head_r);
  // torso frame runs neck -> pelvis with a fixed length, so it is rigid too
  pose.parts[kTorso] = capsule(neck, pelvis, id.r_torso);
  pose.parts[kRUpperArm] = capsule(r_shoulder, r_elbow, id.r_upper_arm);
  pose.parts[kRLowerArm] = capsule(r_elbow, r_wrist, id.r_lower_arm);
  pose.parts[kLUpperArm] = capsule(l_shoulder, l_elbow, id.r_upper_arm);
  pose.parts[kLLowerArm] = capsule(l_elbow, l_wrist, id.r_lower_arm);
  pose.parts[kRUpperLeg] = capsule(r_hip, r_knee, id.r_upper_leg);
  pose.parts[kRLowerLeg] = capsule(r_knee, r_ankle, id.r_lower_leg);
  pose.parts[kLUpperLeg] = capsule(l_hip, l_knee, id.r_upper_leg);
  pose.parts[kLLowerLeg] = capsule(l_knee, l_ankle, id.r_lower_leg);
  return pose;
}

// Topmost part per pixel, -1 for background.
std::vector<int> rasterize(const Pose& pose, int size) {
  std::vector<int> owner(static_cast<std::size_t>(size) * size, -1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int part : kDrawOrder)
        if (pose.parts[part].contains({double(x), double(y)})) owner[static_cast<std::size_t>(y) * size + x] = part;
  return owner;
}

void shade(const Identity& id, const Pose& pose, const std::vector<int>& owner, int size, int classes,
           Tensor<float>& image, SemanticMap& map) {
  image = Tensor<float>(Shape{1, 3, size, size});
  map = SemanticMap(size, size, classes);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int part = owner[static_cast<std::size_t>(y) * size + x];
      if (part < 0) {
        for (int c = 0; c < 3; ++c) image(0, c, y, x) = static_cast<float>(id.background[c]);
        continue;
      }
      const int label = part_label(part, classes);
      map.at(y, x) = static_cast<std::uint8_t>(label);
      const Vec l = pose.parts[part].frame.to_local({double(x), double(y)});
      const double t = l.x * std::cos(id.orient[label]) + l.y * std::sin(id.orient[label]);
      const double m = 1.0 + 0.12 * std::sin(2.0 * std::numbers::pi * t / id.period[label] + id.phase[label]);
      for (int c = 0; c < 3; ++c) image(0, c, y, x) = static_cast<float>(id.color[label][c] * m);
    }
}

}  // namespace

void SynthConfig::validate() const {
  if (size != 32 && size != 64 && size != 128) throw ConfigError("synth size must be 32, 64 or 128, got " + std::to_string(size));
  if (classes < 5 || classes > kMaxSynthClasses)
    throw ConfigError("synth classes must be in [5, " + std::to_string(kMaxSynthClasses) + "], got " + std::to_string(classes));
  if (pairs < 1) throw ConfigError("synth pairs must be positive");
  if (pairs_per_identity < 1) throw ConfigError("pairs_per_identity must be positive");
  if (!(crossed_fraction >= 0.0 && crossed_fraction <= 1.0)) throw ConfigError("crossed_fraction must be in [0, 1]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
}

int part_label(int part, int classes) {
  // Groups split progressively as classes grow.
  switch (part) {
    case kHair: return 1;
    case kFace: return classes == 5 ? 1 : 2;
    case kTorso: return classes == 5 ? 2 : 3;
    default: break;
  }
  const bool arm = part <= kLLowerArm;
  const bool upper = part == kRUpperArm || part == kLUpperArm || part == kRUpperLeg || part == kLUpperLeg;
  const bool right = part == kRUpperArm || part == kRLowerArm || part == kRUpperLeg || part == kRLowerLeg;
  if (classes == 5) return arm ? 3 : 4;
  if (classes == 6) return arm ? 4 : 5;
  if (classes == 7) return arm ? (upper ? 4 : 5) : 6;
  // classes >= 8: 4 UA, 5 LA, 6 UL, 7 LL before splitting left/right
  int next = 4;
  const bool split_ua = classes >= 9, split_la = classes >= 10, split_ul = classes >= 11, split_ll = classes >= 12;
  const int ua = next;
  next += split_ua ? 2 : 1;
  const int la = next;
  next += split_la ? 2 : 1;
  const int ul = next;
  next += split_ul ? 2 : 1;
  const int ll = next;
  if (arm && upper) return ua + (split_ua && !right ? 1 : 0);
  if (arm) return la + (split_la && !right ? 1 : 0);
  if (upper) return ul + (split_ul && !right ? 1 : 0);
  return ll + (split_ll && !right ? 1 : 0);
}

SyntheticSample synth_sample(const SynthConfig& cfg, int index) {
  cfg.validate();
  const int size = cfg.size;
  const int identity = index / cfg.pairs_per_identity;
  const int identities = (cfg.pairs + cfg.pairs_per_identity - 1) / cfg.pairs_per_identity;
  const int val_ids = static_cast<int>(std::lround(cfg.val_fraction * identities));
  const Identity id = make_identity(cfg, identity);
  auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(index), 0x9a1f);
  const Pose src = make_pose(id, cfg, rng);
  const Pose tgt = make_pose(id, cfg, rng);
  const auto src_owner = rasterize(src, size);
  const auto tgt_owner = rasterize(tgt, size);

  SyntheticSample out;
  out.identity = identity;
  out.validation = identity >= identities - val_ids;
  out.source_kp = src.kp;
  out.target_kp = tgt.kp;
  shade(id, src, src_owner, size, cfg.classes, out.source_image, out.source_map);
  shade(id, tgt, tgt_owner, size, cfg.classes, out.target_image, out.target_map);

  out.flow.phi = Tensor<float>(Shape{1, 2, size, size});
  out.flow.vis = Tensor<float>(Shape{1, 1, size, size});
  auto owner_at = [&](int y, int x) {
    if (x < 0 || y < 0 || x >= size || y >= size) return -2;
    return src_owner[static_cast<std::size_t>(y) * size + x];
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int part = tgt_owner[static_cast<std::size_t>(y) * size + x];
      if (part < 0) {
        out.flow.vis(0, 0, y, x) = owner_at(y, x) == -1 ? 1.0f : 0.0f;
        continue;
      }
      const Vec local = tgt.parts[part].frame.to_local({double(x), double(y)});
      const Vec p = src.parts[part].frame.to_world(local);
      out.flow.phi(0, 0, y, x) = static_cast<float>(p.x - x);
      out.flow.phi(0, 1, y, x) = static_cast<float>(p.y - y);
      const int x0 = static_cast<int>(std::floor(p.x)), y0 = static_cast<int>(std::floor(p.y));
      const bool visible = owner_at(y0, x0) == part && owner_at(y0, x0 + 1) == part &&
                           owner_at(y0 + 1, x0) == part && owner_at(y0 + 1, x0 + 1) == part;
      out.flow.vis(0, 0, y, x) = visible ? 1.0f : 0.0f;
    }
  return out;
}

std::vector<SyntheticSample> synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SyntheticSample> samples(static_cast<std::size_t>(cfg.pairs));
  for (int i = 0; i < cfg.pairs; ++i) samples[i] = synth_sample(cfg, i);
  return samples;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  manifest << "index,identity,split,classes,size\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    char stem[16];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const std::filesystem::path base = dir / stem;
    write_ppm(base.string() + "_src.ppm", s.source_image);
    write_ppm(base.string() + "_tgt.ppm", s.target_image);
    write_semantic_map(base.string() + "_src.pgm", s.source_map);
    write_semantic_map(base.string() + "_tgt.pgm", s.target_map);
    write_keypoints(base.string() + "_src.kp", s.source_kp);
    write_keypoints(base.string() + "_tgt.kp", s.target_kp);
    save_flow(base.string() + "_flow", s.flow);
    manifest << stem << ',' << s.identity << ',' << (s.validation ? "val" : "train") << ','
             << s.source_map.classes() << ',' << s.source_map.height() << '\n';
  }
  write_file_atomic(dir / "manifest.csv", manifest.str());
}

}  // namespace spg
