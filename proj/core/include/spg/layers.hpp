#pragma once

#include <cstdint>
#include <string>

#include "spg/ops.hpp"

namespace spg {

/// Forward-pass context shared by every layer of a model.
struct Mode {
  bool training = false;
};

/// Seeded weight initialisation; each tensor draws from a generator keyed
/// by (seed, parameter name), so values do not depend on creation order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

  // Uniform in [-bound, bound].
  template <typename T>
  Tensor<T> uniform(const std::string& name, Shape shape, double bound) const;

 private:
  std::uint64_t seed_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  // Kaiming-style fan-in uniform init: bound 1/sqrt(c_in*k*k) for weight and bias.
  Conv2d(ParamStore<T>& store, const std::string& name, int c_in, int c_out, int k, int stride = 1,
         int pad = -1, bool bias = true, const Initializer& init = Initializer(0));

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  int out_channels() const { return weight_.shape().n; }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int pad_ = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  // pad defaults to k/2; output_pad = stride-1 makes stride-s layers scale by exactly s.
  ConvTranspose2d(ParamStore<T>& store, const std::string& name, int c_in, int c_out, int k,
                  int stride, const Initializer& init);

  Var<T> operator()(const Var<T>& x) const {
    return conv_transpose2d(x, weight_, bias_, stride_, pad_, output_pad_);
  }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int pad_ = 0;
  int output_pad_ = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels);

  Var<T> operator()(const Var<T>& x, const Mode& mode) const {
    return batch_norm(x, gamma_, beta_, running_mean_.mutable_value(), running_var_.mutable_value(),
                      mode.training);
  }

 private:
  Var<T> gamma_;
  Var<T> beta_;
  // Buffers live in the store (non-trainable) so checkpoints carry them.
  mutable Var<T> running_mean_;
  mutable Var<T> running_var_;
};

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus the skip (1x1 projection
/// when channel counts differ).
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamStore<T>& store, const std::string& name, int c_in, int c_out,
                const Initializer& init);

  Var<T> operator()(const Var<T>& x, const Mode& mode) const;

  Conv2d<T>& last_conv() { return conv2_; }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Conv2d<T> skip_;
  bool project_ = false;
};

/// Zeroes a parameter tensor in place.
template <typename T>
void zero_fill(Var<T>& v) {
  v.mutable_value().fill(T(0));
}

}  // namespace spg
