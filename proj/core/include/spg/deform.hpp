#pragma once

#include <filesystem>
#include <string>

#include "spg/layers.hpp"

namespace spg {

/// Backward-warping offsets (n,2,H,W) in pixels and a binary visibility map
/// (n,1,H,W). Target pixel (y,x) reads the source at (x+phi_x, y+phi_y).
template <typename T>
struct FlowField {
  Tensor<T> phi;
  Tensor<T> vis;

  int height() const { return phi.shape().h; }
  int width() const { return phi.shape().w; }
  // Throws ValidationError unless vis is binary and phi finite.
  void validate() const;
};

/// Average-pools phi to (h, w), rescales its x/y components by w/W and h/H,
/// and nearest-downsamples vis.
template <typename T>
FlowField<T> scale_flow(const FlowField<T>& flow, int height, int width);

template <typename T>
FlowField<T> stack_flows(std::span<const FlowField<T>> flows);

/// `<prefix>.phi.spgt` and `<prefix>.vis.spgt`.
template <typename T>
void save_flow(const std::filesystem::path& prefix, const FlowField<T>& flow);
template <typename T>
FlowField<T> load_flow(const std::filesystem::path& prefix);

/// Warped feature split by visibility: visible = f' * V, invisible = f' * (1 - V).
template <typename T>
struct WarpBranches {
  Var<T> warped;
  Var<T> visible;
  Var<T> invisible;
};

template <typename T>
WarpBranches<T> warp_branches(const Var<T>& features, const FlowField<T>& flow);

/// Feature deformation: warp, split by visibility, concatenate, and map back
/// to the input width with a residual block.
template <typename T>
class FeatureWarp {
 public:
  FeatureWarp() = default;
  FeatureWarp(ParamStore<T>& store, const std::string& name, int channels, const Initializer& init);

  /// `flow` must already be scaled to the feature's spatial size.
  Var<T> operator()(const Var<T>& features, const FlowField<T>& flow, const Mode& mode) const;

  ResidualBlock<T>& block() { return block_; }

 private:
  ResidualBlock<T> block_;
};

}  // namespace spg
