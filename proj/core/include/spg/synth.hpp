#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spg/deform.hpp"
#include "spg/pose.hpp"
#include "spg/semantics.hpp"

namespace spg {

struct SynthConfig {
  int pairs = 500;
  int size = 64;
  int classes = 8;
  std::uint64_t seed = 1;
  int pairs_per_identity = 5;
  double crossed_fraction = 0.2;  // probability that an arm is folded across the torso
  double val_fraction = 0.1;      // share of identities held out

  // Throws ConfigError unless size is 32/64/128 and 5 <= classes <= 12.
  void validate() const;
};

inline constexpr int kMaxSynthClasses = 12;

struct SyntheticSample {
  int identity = 0;
  bool validation = false;
  Keypoints source_kp;
  Keypoints target_kp;
  SemanticMap source_map;
  SemanticMap target_map;
  Tensor<float> source_image;  // (1,3,S,S) in [0,1]
  Tensor<float> target_image;
  FlowField<float> flow;       // target pixel -> source location
};

/// Stick-figure pairs: each identity has fixed bone lengths, a per-region
/// color and stripe texture; each pair shows it in two random poses.
/// Deterministic in cfg.seed and independent of generation order.
std::vector<SyntheticSample> synth_dataset(const SynthConfig& cfg);

/// One pair; `index` selects identity index / pairs_per_identity.
SyntheticSample synth_sample(const SynthConfig& cfg, int index);

/// Label of body part `part` (0 hair, 1 face, 2 torso, 3..6 right/left
/// upper/lower arm, 7..10 right/left upper/lower leg) for `classes` classes.
int part_label(int part, int classes);

/// Writes NNNNN_{src,tgt}.{ppm,pgm,kp}, NNNNN_flow.{phi,vis}.spgt and
/// manifest.csv into dir.
void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples);

}  // namespace spg
