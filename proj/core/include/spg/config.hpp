#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spg/losses.hpp"
#include "spg/models.hpp"
#include "spg/synth.hpp"

namespace spg {

enum class Scheme { kSequential, kJoint, kParallel };

// "seq", "joint", "parallel"; throws ConfigError otherwise.
Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

struct TrainSettings {
  int iters = 2000;
  int batch_size = 4;
  double lr_g = 2e-4;
  double lr_d = 2e-5;
  int val_every = 100;
  int log_every = 50;
  int val_samples = 0;   // 0 uses the whole held-out split
  int patience = 5;
  Scheme scheme = Scheme::kParallel;
  int spatn_iters = 1000;  // pretraining length for the sequential scheme
  std::string spatn_ckpt;  // optional pretrained stage-one weights
};

/// Flat key=value run configuration. Every key maps to one field below;
/// unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  LossWeights weights;
  TrainSettings train;
  int pairs = 500;
  int pairs_per_identity = 5;
  double crossed_fraction = 0.2;
  double val_fraction = 0.1;
  std::uint64_t seed = 1;

  /// Parses `key = value` lines; '#' starts a comment.
  static RunConfig parse(const std::string& text, const std::string& origin = "<string>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// Every key with its value, one `key = value` per line in key order.
  std::string resolved() const;
  void validate() const;

  SynthConfig synth() const;
};

}  // namespace spg
