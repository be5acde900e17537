#pragma once

#include <utility>
#include <vector>

#include "spg/autograd.hpp"

namespace spg {

inline constexpr double kNormEps = 1e-5;

// Convolution weights are (c_out, c_in, k, k); biases are (1, c_out, 1, 1)
// and may be left undefined. Padding is zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride = 1, int pad = 0);

// Transposed convolution, the adjoint of conv2d. Weights are (c_in, c_out, k, k).
// Output size (h-1)*stride - 2*pad + k + output_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad = 0);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope = 0.2);
template <typename T>
Var<T> tanh(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Softmax across the channel axis at every (n, y, x).
template <typename T>
Var<T> softmax_channels(const Var<T>& x);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
// scale * x + shift with constant scale and shift.
template <typename T>
Var<T> affine(const Var<T>& x, double scale, double shift = 0.0);
// x (n,c,h,w) times a single-channel mask (n,1,h,w), broadcast over channels.
template <typename T>
Var<T> mul_channel_broadcast(const Var<T>& x, const Var<T>& mask);
// s*a + (1-s)*b with s = logistic(theta); theta holds one element.
template <typename T>
Var<T> sigmoid_blend(const Var<T>& theta, const Var<T>& a, const Var<T>& b);

// Non-overlapping k x k average pooling; h and w must be divisible by k.
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int k);
// Keeps pixel (y*factor, x*factor).
template <typename T>
Var<T> downsample_nearest(const Var<T>& x, int factor);

/// Per-channel batch normalization. In training mode statistics come from
/// the batch and running estimates are updated in place (momentum 0.1,
/// unbiased variance); in eval mode the running estimates are used.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, double momentum = 0.1,
                  double eps = kNormEps);

/// (x - mu) / sigma per (n, c) over spatial positions, sigma = sqrt(var + eps).
template <typename T>
Var<T> instance_normalize(const Var<T>& x, double eps = kNormEps);

/// Per-(n,c) spatial mean and sqrt(biased variance + eps), each (n,c,1,1).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> instance_norm_stats(const Tensor<T>& x, double eps = kNormEps);

/// Depth-to-space: out[n, c, y*r+a, x*r+b] = in[n, c*r*r + a*r + b, y, x].
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);
/// Space-to-depth, the inverse permutation of pixel_shuffle.
template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r);

/// Backward warp: out(y, x) samples x at (x + flow_x, y + flow_y) with
/// bilinear weights; samples outside the image read zero. flow is (n,2,h,w)
/// with the same spatial dims as x; channel 0 is the x offset.
template <typename T>
Var<T> grid_sample_bilinear(const Var<T>& x, const Var<T>& flow);

template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);

/// Channel-wise argmax of (n,c,h,w) into n*h*w labels.
template <typename T>
std::vector<int> argmax_channels(const Tensor<T>& x);

}  // namespace spg
