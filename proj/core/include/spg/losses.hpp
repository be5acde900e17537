#pragma once

#include <cstdint>
#include <vector>

#include "spg/layers.hpp"

namespace spg {

struct LossWeights {
  double ce = 10.0;
  double l1 = 1.0;
  double perc = 1.0;
  double adv = 0.01;

  // Throws ConfigError on a negative or non-finite weight.
  void validate() const;
};

/// Mean absolute difference over every element.
template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b);

/// Fixed pyramid of K seeded conv3x3 stride-2 + ReLU stages. Weights never
/// require gradients; features stay differentiable in the input.
template <typename T>
class FeatureExtractor {
 public:
  static constexpr int kStages = 4;

  explicit FeatureExtractor(std::uint64_t seed = 0x5eed, int in_channels = 3, std::vector<int> widths = {16, 32, 64, 64});

  std::vector<Var<T>> operator()(const Var<T>& x) const;
  int stages() const { return static_cast<int>(convs_.size()); }
  // Stage k holds phi<k>.weight and phi<k>.bias.
  const ParamStore<T>& params() const { return store_; }

 private:
  ParamStore<T> store_;
  std::vector<Conv2d<T>> convs_;
};

/// sum_k mean((phi_k(a) - phi_k(b))^2).
template <typename T>
Var<T> perceptual_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx);

inline constexpr double kProbClamp = 1e-7;

/// -mean log p, with p = clamp(logistic(z)) for real targets and 1 - that
/// otherwise. Zero gradient where the clamp is active.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, bool real);

template <typename T>
struct AdversarialLosses {
  Var<T> discriminator;
  Var<T> generator;
};

/// L_D = bce(real, 1) + bce(fake, 0); L_G = bce(fake, 1).
template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& real_logits, const Var<T>& fake_logits);

/// Scalar parts of the full objective; `ce` may be left undefined.
template <typename T>
struct LossParts {
  Var<T> ce;
  Var<T> l1;
  Var<T> perc;
  Var<T> adv;
};

template <typename T>
Var<T> full_objective(const LossParts<T>& parts, const LossWeights& w);

}  // namespace spg
