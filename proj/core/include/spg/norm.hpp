#pragma once

#include <string>

#include "spg/layers.hpp"

namespace spg {

struct SeanConfig {
  int channels = 0;      // channels of the normalized feature
  int classes = 8;       // semantic input channels
  int style_dim = 32;    // style-map channels
  int hidden = 32;       // width of each path's shared conv
  int kernel = 3;        // shared-conv kernel; 1 gives strictly per-pixel paths
};

/// One modulation path: shared conv + ReLU, then separate 1x1 heads for
/// alpha and beta.
template <typename T>
class ModulationPath {
 public:
  ModulationPath() = default;
  ModulationPath(ParamStore<T>& store, const std::string& name, int c_in, const SeanConfig& cfg,
                 const Initializer& init);

  struct Output {
    Var<T> alpha;
    Var<T> beta;
  };
  Output operator()(const Var<T>& x) const;

  Conv2d<T>& shared() { return shared_; }
  Conv2d<T>& alpha_head() { return alpha_; }
  Conv2d<T>& beta_head() { return beta_; }

 private:
  Conv2d<T> shared_;
  Conv2d<T> alpha_;
  Conv2d<T> beta_;
};

/// Semantic region-adaptive normalization:
///   out = alpha * (h - mu) / sigma + beta,
///   alpha = s(theta_a) * alpha_sem + (1 - s(theta_a)) * alpha_style (beta alike),
/// with instance statistics per (sample, channel) and s the logistic function.
template <typename T>
class Sean {
 public:
  Sean() = default;
  Sean(ParamStore<T>& store, const std::string& name, const SeanConfig& cfg, const Initializer& init);

  /// `semantic` and `style` must already match h's spatial size; see
  /// resize_condition() for the standard resizing.
  Var<T> operator()(const Var<T>& h, const Var<T>& semantic, const Var<T>& style) const;

  /// SPADE-style variant: alpha and beta from the semantic path only.
  Var<T> spade(const Var<T>& h, const Var<T>& semantic) const;

  ModulationPath<T>& semantic_path() { return semantic_; }
  ModulationPath<T>& style_path() { return style_; }
  Var<T>& theta_alpha() { return theta_alpha_; }
  Var<T>& theta_beta() { return theta_beta_; }
  const SeanConfig& config() const { return cfg_; }

 private:
  SeanConfig cfg_;
  ModulationPath<T> semantic_;
  ModulationPath<T> style_;
  Var<T> theta_alpha_;
  Var<T> theta_beta_;
};

/// Brings a full-resolution semantic map (nearest neighbour) and style map
/// (average pooling) down to `height` x `width`.
template <typename T>
std::pair<Var<T>, Var<T>> resize_condition(const Var<T>& semantic, const Var<T>& style, int height,
                                           int width);

}  // namespace spg
