#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "spg/tensor.hpp"

namespace spg {

inline constexpr int kNumJoints = 18;
inline constexpr int kNumLimbs = 12;
inline constexpr int kPoseChannels = kNumJoints + kNumLimbs;
inline constexpr double kDefaultKappa = -0.1;

// Joint order: 0 nose, 1 neck, 2 r-shoulder, 3 r-elbow, 4 r-wrist,
// 5 l-shoulder, 6 l-elbow, 7 l-wrist, 8 r-hip, 9 r-knee, 10 r-ankle,
// 11 l-hip, 12 l-knee, 13 l-ankle, 14 r-eye, 15 l-eye, 16 r-ear, 17 l-ear.
enum Joint : int {
  kNose, kNeck, kRShoulder, kRElbow, kRWrist, kLShoulder, kLElbow, kLWrist,
  kRHip, kRKnee, kRAnkle, kLHip, kLKnee, kLAnkle, kREye, kLEye, kREar, kLEar
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

using Keypoints = std::array<Keypoint, kNumJoints>;

/// The 12 joint pairs whose segments form the skeleton.
class LimbSet {
 public:
  using Pair = std::pair<int, int>;

  explicit LimbSet(std::vector<Pair> pairs);
  static const LimbSet& standard();

  const std::vector<Pair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  const Pair& operator[](std::size_t i) const { return pairs_[i]; }

 private:
  std::vector<Pair> pairs_;
};

/// Euclidean distance from (px, py) to the closed segment a-b.
double point_segment_distance(double px, double py, double ax, double ay, double bx, double by);

/// Default heatmap sigma: H/42 pixels.
inline double default_heatmap_sigma(int height) { return height / 42.0; }

/// (1,18,H,W) Gaussian joint heatmaps, peak 1 at the joint; invisible joints
/// give all-zero channels.
Tensor<float> render_heatmaps(const Keypoints& kp, int height, int width, double sigma);

/// (1,12,H,W) maps exp(kappa * d) with d the distance to each limb segment;
/// channels of limbs with an invisible endpoint are zero.
Tensor<float> distance_map(const Keypoints& kp, const LimbSet& limbs, int height, int width,
                           double kappa = kDefaultKappa);

/// Heatmaps followed by distance maps: (1,30,H,W). With
/// `with_distance_maps` false only the 18 heatmap channels are produced.
Tensor<float> build_pose_tensor(const Keypoints& kp, const LimbSet& limbs, int height, int width,
                                double sigma, double kappa = kDefaultKappa,
                                bool with_distance_maps = true);

/// Text format: 18 lines "x y v" with v in {0,1}.
Keypoints read_keypoints(const std::filesystem::path& path);
Keypoints parse_keypoints(const std::string& text);
std::string format_keypoints(const Keypoints& kp);
void write_keypoints(const std::filesystem::path& path, const Keypoints& kp);

}  // namespace spg
