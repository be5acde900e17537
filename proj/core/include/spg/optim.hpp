#pragma once

#include <map>
#include <string>
#include <vector>

#include "spg/autograd.hpp"

namespace spg {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam with per-parameter moments keyed by name:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   p -= lr * m_hat / (sqrt(v_hat) + eps).
/// Entries whose gradient was never touched are skipped.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Throws DivergenceError naming the first non-finite gradient; nothing is
  // updated in that case.
  void step(ParamStore<T>& params);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return step_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, Moments> state_;
};

/// Halves the multiplier when the best validation loss has not improved by
/// at least `threshold` for `patience` consecutive rounds. Floors at 1/64.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(int patience = 5, double factor = 0.5, double threshold = 1e-4,
                           double floor = 1.0 / 64.0);

  // Records one validation loss; returns the current multiplier.
  double observe(double loss);
  double multiplier() const { return multiplier_; }
  int reductions() const { return reductions_; }

 private:
  int patience_;
  double factor_;
  double threshold_;
  double floor_;
  double best_;
  int stale_ = 0;
  int reductions_ = 0;
  double multiplier_ = 1.0;
};

}  // namespace spg
