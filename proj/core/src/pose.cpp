#include "spg/pose.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "spg/error.hpp"
#include "spg/spgt.hpp"

namespace spg {

LimbSet::LimbSet(std::vector<Pair> pairs) : pairs_(std::move(pairs)) {
  if (pairs_.size() != kNumLimbs)
    throw ValidationError("limb set needs exactly 12 pairs, got " + std::to_string(pairs_.size()));
  std::set<Pair> seen;
  for (const auto& [a, b] : pairs_) {
    if (a < 0 || a >= kNumJoints || b < 0 || b >= kNumJoints)
      throw ValidationError("limb joint index out of range");
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second)
      throw ValidationError("duplicate limb pair");
  }
}

const LimbSet& LimbSet::standard() {
  // COCO-style skeleton without the nose-neck segment.
  static const LimbSet limbs({{kNeck, kRShoulder},
                              {kNeck, kLShoulder},
                              {kRShoulder, kRElbow},
                              {kLShoulder, kLElbow},
                              {kRElbow, kRWrist},
                              {kLElbow, kLWrist},
                              {kNeck, kRHip},
                              {kNeck, kLHip},
                              {kRHip, kRKnee},
                              {kLHip, kLKnee},
                              {kRKnee, kRAnkle},
                              {kLKnee, kLAnkle}});
  return limbs;
}

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

Tensor<float> render_heatmaps(const Keypoints& kp, int height, int width, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("heatmap sigma must be positive");
  Tensor<float> out(Shape{1, kNumJoints, height, width});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int j = 0; j < kNumJoints; ++j) {
    if (!kp[j].visible) continue;
    float* p = out.plane(0, j);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = x - kp[j].x, dy = y - kp[j].y;
        p[static_cast<std::size_t>(y) * width + x] = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
      }
  }
  return out;
}

Tensor<float> distance_map(const Keypoints& kp, const LimbSet& limbs, int height, int width, double kappa) {
  if (!(kappa < 0.0)) throw ValidationError("distance-map kappa must be negative");
  Tensor<float> out(Shape{1, static_cast<int>(limbs.size()), height, width});
  for (std::size_t m = 0; m < limbs.size(); ++m) {
    const Keypoint& a = kp[limbs[m].first];
    const Keypoint& b = kp[limbs[m].second];
    if (!a.visible || !b.visible) continue;
    float* p = out.plane(0, static_cast<int>(m));
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double d = point_segment_distance(x, y, a.x, a.y, b.x, b.y);
        p[static_cast<std::size_t>(y) * width + x] = static_cast<float>(std::exp(kappa * d));
      }
  }
  return out;
}

Tensor<float> build_pose_tensor(const Keypoints& kp, const LimbSet& limbs, int height, int width,
                                double sigma, double kappa, bool with_distance_maps) {
  Tensor<float> heat = render_heatmaps(kp, height, width, sigma);
  if (!with_distance_maps) return heat;
  Tensor<float> dist = distance_map(kp, limbs, height, width, kappa);
  AlignedVector<float> data = std::move(heat.storage());
  data.insert(data.end(), dist.storage().begin(), dist.storage().end());
  return Tensor<float>(Shape{1, kNumJoints + static_cast<int>(limbs.size()), height, width}, std::move(data));
}

namespace {

double parse_number(const std::string& tok, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError("keypoints line " + std::to_string(line) + ": non-numeric field '" + tok + "'");
  return v;
}

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

Keypoints parse_keypoints(const std::string& text) {
  Keypoints kp{};
  std::istringstream is(text);
  std::string raw;
  int count = 0;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::istringstream ls(raw);
    std::vector<std::string> fields;
    for (std::string tok; ls >> tok;) fields.push_back(tok);
    if (fields.empty()) continue;
    if (fields.size() != 3)
      throw ParseError("keypoints line " + std::to_string(line_no) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    if (count >= kNumJoints)
      throw ParseError("keypoints line " + std::to_string(line_no) + ": more than 18 joints");
    const double x = parse_number(fields[0], line_no);
    const double y = parse_number(fields[1], line_no);
    const double v = parse_number(fields[2], line_no);
    if (v != 0.0 && v != 1.0)
      throw ParseError("keypoints line " + std::to_string(line_no) + ": visibility must be 0 or 1");
    kp[count++] = Keypoint{x, y, v == 1.0};
  }
  if (count != kNumJoints)
    throw ParseError("keypoints: expected 18 joints, got " + std::to_string(count) + " (line " +
                     std::to_string(line_no) + ")");
  return kp;
}

Keypoints read_keypoints(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_keypoints(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_keypoints(const Keypoints& kp) {
  std::string out;
  for (const auto& k : kp) out += shortest(k.x) + " " + shortest(k.y) + " " + (k.visible ? "1" : "0") + "\n";
  return out;
}

void write_keypoints(const std::filesystem::path& path, const Keypoints& kp) {
  write_file_atomic(path, format_keypoints(kp));
}

}  // namespace spg
