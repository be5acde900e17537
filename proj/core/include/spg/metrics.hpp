#pragma once

#include <cstdint>
#include <vector>

#include "spg/semantics.hpp"

namespace spg {

struct SsimConfig {
  int window = 11;  // shrinks to the image size for smaller images
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

/// Mean SSIM over channels, batch and every fully-inside Gaussian window.
double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimConfig& cfg = {});

/// (n,1,H,W) mask: 1 where the label is not background (0).
Tensor<float> foreground_mask(std::span<const SemanticMap> maps);

/// SSIM of a*mask and b*mask; mask is (n,1,H,W) and broadcast over channels.
double masked_ssim(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask,
                   const SsimConfig& cfg = {});

/// Accumulates label co-occurrences over any number of map pairs.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  // Throws ValidationError on labels >= classes, ShapeError on size mismatch.
  void add(const SemanticMap& pred, const SemanticMap& truth);

  /// IOU averaged over classes present in pred or truth.
  double miou() const;
  double pixel_accuracy() const;
  /// IOU of one class; negative when the class never occurs.
  double iou(int label) const;
  std::uint64_t count(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * classes_ + pred]; }
  int classes() const { return classes_; }

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

double miou(const SemanticMap& pred, const SemanticMap& truth, int classes);
double pixel_accuracy(const SemanticMap& pred, const SemanticMap& truth);

}  // namespace spg
