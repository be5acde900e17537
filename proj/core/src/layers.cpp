#include "spg/layers.hpp"

#include <cmath>
#include <random>

namespace spg {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

template <typename T>
Tensor<T> Initializer::uniform(const std::string& name, Shape shape, double bound) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(fnv1a(name)), static_cast<std::uint32_t>(fnv1a(name) >> 32)};
  std::mt19937_64 rng(seq);
  // Explicit mapping instead of uniform_real_distribution keeps values
  // identical across standard libraries.
  Tensor<T> t(shape);
  for (auto& v : t.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<T>((2.0 * u - 1.0) * bound);
  }
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int c_in, int c_out, int k, int stride,
                  int pad, bool bias, const Initializer& init)
    : stride_(stride), pad_(pad < 0 ? k / 2 : pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
  weight_ = store.add(name + ".weight", init.uniform<T>(name + ".weight", Shape{c_out, c_in, k, k}, bound));
  if (bias) bias_ = store.add(name + ".bias", init.uniform<T>(name + ".bias", Shape{1, c_out, 1, 1}, bound));
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParamStore<T>& store, const std::string& name, int c_in, int c_out,
                                    int k, int stride, const Initializer& init)
    : stride_(stride), pad_(k / 2), output_pad_(stride - 1) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_out) * k * k);
  weight_ = store.add(name + ".weight", init.uniform<T>(name + ".weight", Shape{c_in, c_out, k, k}, bound));
  bias_ = store.add(name + ".bias", init.uniform<T>(name + ".bias", Shape{1, c_out, 1, 1}, bound));
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels) {
  const Shape s{1, channels, 1, 1};
  gamma_ = store.add(name + ".gamma", Tensor<T>(s, T(1)));
  beta_ = store.add(name + ".beta", Tensor<T>(s, T(0)));
  running_mean_ = store.add(name + ".running_mean", Tensor<T>(s, T(0)), false);
  running_var_ = store.add(name + ".running_var", Tensor<T>(s, T(1)), false);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(ParamStore<T>& store, const std::string& name, int c_in, int c_out,
                                const Initializer& init)
    : conv1_(store, name + ".conv1", c_in, c_out, 3, 1, 1, true, init),
      bn1_(store, name + ".bn1", c_out),
      conv2_(store, name + ".conv2", c_out, c_out, 3, 1, 1, true, init),
      bn2_(store, name + ".bn2", c_out),
      project_(c_in != c_out) {
  if (project_) skip_ = Conv2d<T>(store, name + ".skip", c_in, c_out, 1, 1, 0, false, init);
}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x, const Mode& mode) const {
  Var<T> h = relu(bn1_(conv1_(x), mode));
  h = bn2_(conv2_(h), mode);
  return add(h, project_ ? skip_(x) : x);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template Tensor<float> Initializer::uniform<float>(const std::string&, Shape, double) const;
template Tensor<double> Initializer::uniform<double>(const std::string&, Shape, double) const;

}  // namespace spg
