#include "spg/losses.hpp"

#include <cmath>

namespace spg {

void LossWeights::validate() const {
  const double all[] = {ce, l1, perc, adv};
  const char* names[] = {"lambda_ce", "lambda_l1", "lambda_perc", "lambda_adv"};
  for (int i = 0; i < 4; ++i)
    if (!(all[i] >= 0.0) || !std::isfinite(all[i]))
      throw ConfigError(std::string(names[i]) + " must be a non-negative number, got " + std::to_string(all[i]));
}

template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("l1_loss: " + a.shape().str() + " vs " + b.shape().str());
  const auto& av = a.value();
  const auto& bv = b.value();
  const double count = static_cast<double>(av.size());
  double acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  Var<T> out(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / count)));
  if (needs_grad<T>({&a, &b})) {
    record_op<T>("l1_loss", {&a, &b}, out, [a, b, out, count]() {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / count;
      const auto& av = a.value();
      const auto& bv = b.value();
      Tensor<T>* ga = a.requires_grad() ? &a.node()->grad_buffer() : nullptr;
      Tensor<T>* gb = b.requires_grad() ? &b.node()->grad_buffer() : nullptr;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const T d = av[i] - bv[i];
        const T s = d > 0 ? T(g) : (d < 0 ? T(-g) : T(0));
        if (ga) (*ga)[i] += s;
        if (gb) (*gb)[i] -= s;
      }
    });
  }
  return out;
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed, int in_channels, std::vector<int> widths) {
  const Initializer init(seed);
  int c = in_channels;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    // He gain for ReLU
    convs_.emplace_back(store_, "phi" + std::to_string(k), c, widths[k], 3, 2, 1, true, init);
    auto& w = convs_.back().weight().mutable_value();
    for (auto& v : w.values()) v *= T(std::sqrt(6.0));
    c = widths[k];
  }
  store_.set_trainable(false);
}

template <typename T>
std::vector<Var<T>> FeatureExtractor<T>::operator()(const Var<T>& x) const {
  std::vector<Var<T>> feats;
  Var<T> h = x;
  for (const auto& conv : convs_) {
    h = relu(conv(h));
    feats.push_back(h);
  }
  return feats;
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx) {
  if (a.shape() != b.shape()) throw ShapeError("perceptual_loss: " + a.shape().str() + " vs " + b.shape().str());
  const auto fa = fx(a);
  const auto fb = fx(b);
  Var<T> total;
  for (std::size_t k = 0; k < fa.size(); ++k) {
    Var<T> d = sub(fa[k], fb[k]);
    Var<T> term = mean(mul(d, d));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, bool real) {
  const auto& z = logits.value();
  const double count = static_cast<double>(z.size());
  if (count == 0) throw ShapeError("bce_with_logits: empty logits");
  double acc = 0;
  for (T v : z.values()) {
    const double p = std::clamp(1.0 / (1.0 + std::exp(-static_cast<double>(v))), kProbClamp, 1.0 - kProbClamp);
    acc -= std::log(real ? p : 1.0 - p);
  }
  Var<T> out(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / count)));
  if (needs_grad<T>({&logits})) {
    record_op<T>("bce_with_logits", {&logits}, out, [logits, out, count, real]() {
      if (!out.has_grad() || !logits.requires_grad()) return;
      const double g = out.grad()[0] / count;
      auto& gz = logits.node()->grad_buffer();
      const auto& z = logits.value();
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
        if (s < kProbClamp || s > 1.0 - kProbClamp) continue;
        gz[i] += static_cast<T>(g * (real ? s - 1.0 : s));
      }
    });
  }
  return out;
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& real_logits, const Var<T>& fake_logits) {
  for (const Var<T>* v : {&real_logits, &fake_logits})
    if (!v->value().all_finite()) throw DivergenceError("adversarial_losses: non-finite discriminator logits");
  return {add(bce_with_logits(real_logits, true), bce_with_logits(fake_logits, false)),
          bce_with_logits(fake_logits, true)};
}

template <typename T>
Var<T> full_objective(const LossParts<T>& parts, const LossWeights& w) {
  w.validate();
  Var<T> total(Tensor<T>(Shape{1, 1, 1, 1}));
  auto term = [&](const Var<T>& part, double weight) {
    if (!part.defined()) return;
    if (!std::isfinite(static_cast<double>(part.item()))) throw DivergenceError("full_objective: non-finite loss part");
    total = add(total, affine(part, weight));
  };
  term(parts.ce, w.ce);
  term(parts.l1, w.l1);
  term(parts.perc, w.perc);
  term(parts.adv, w.adv);
  return total;
}

#define SPG_INSTANTIATE_LOSSES(T)                                                         \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                  \
  template class FeatureExtractor<T>;                                                     \
  template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&); \
  template Var<T> bce_with_logits(const Var<T>&, bool);                                   \
  template AdversarialLosses<T> adversarial_losses(const Var<T>&, const Var<T>&);         \
  template Var<T> full_objective(const LossParts<T>&, const LossWeights&);

SPG_INSTANTIATE_LOSSES(float)
SPG_INSTANTIATE_LOSSES(double)

}  // namespace spg
