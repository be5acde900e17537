#include "spg/optim.hpp"

#include <cmath>
#include <limits>

namespace spg {

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
  for (const auto& [name, e] : params.entries()) {
    if (!e.trainable || !e.var.has_grad()) continue;
    if (!e.var.grad().all_finite()) throw DivergenceError("adam: non-finite gradient in " + name + ", step refused");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, e] : params.entries()) {
    if (!e.trainable || !e.var.has_grad()) continue;
    auto& value = e.var.mutable_value();
    const auto& grad = e.var.grad();
    Moments& mo = state_[name];
    if (mo.m.size() != value.size()) {
      mo.m.assign(value.size(), 0.0);
      mo.v.assign(value.size(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = mo.m[i] / bc1;
      const double v_hat = mo.v[i] / bc2;
      value[i] = static_cast<T>(value[i] - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

PlateauSchedule::PlateauSchedule(int patience, double factor, double threshold, double floor)
    : patience_(patience),
      factor_(factor),
      threshold_(threshold),
      floor_(floor),
      best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
}

double PlateauSchedule::observe(double loss) {
  if (loss < best_ - threshold_) {
    best_ = loss;
    stale_ = 0;
    return multiplier_;
  }
  if (++stale_ >= patience_) {
    multiplier_ = std::max(multiplier_ * factor_, floor_);
    ++reductions_;
    stale_ = 0;
  }
  return multiplier_;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace spg
