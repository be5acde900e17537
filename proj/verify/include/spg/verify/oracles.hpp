#pragma once

// Slow, loop-level reference implementations used to cross-check the
// optimized code paths.

#include <vector>

#include "spg/losses.hpp"
#include "spg/metrics.hpp"
#include "spg/semantics.hpp"

namespace spg::oracle {

Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride, int pad);
// Scatter form of the transposed convolution.
Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                                int pad, int output_pad);

/// Minimum distance to `samples`+1 evenly spaced points on the segment.
double sampled_segment_distance(double px, double py, double ax, double ay, double bx, double by, int samples);

/// Per-region mean feature by direct per-class loops; (n, C, D, 1).
Tensor<double> region_means(const Tensor<double>& features, const std::vector<SemanticMap>& maps);

double cross_entropy(const Tensor<double>& probs, const std::vector<SemanticMap>& truth);
double l1(const Tensor<double>& a, const Tensor<double>& b);

/// Bilinear sample of plane (n,c) at (x, y) with zero outside.
double bilinear(const Tensor<double>& img, int n, int c, double x, double y);

/// SSIM of two constant images with means m1, m2.
double constant_ssim(double m1, double m2, const SsimConfig& cfg = {});

/// Mean IOU by per-class pixel counting over one pair.
double miou(const SemanticMap& pred, const SemanticMap& truth, int classes);

/// Perceptual loss recomputed stage by stage with the loop convolution.
double perceptual(const Tensor<double>& a, const Tensor<double>& b, const FeatureExtractor<double>& fx);

}  // namespace spg::oracle
