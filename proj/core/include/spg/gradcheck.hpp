#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spg/autograd.hpp"

namespace spg {

struct GradCheckEntry {
  std::string name;
  int coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

/// Per-parameter comparison of autodiff gradients against central
/// differences. Relative error is |g_ad - g_fd| / max(1, |g_fd|).
struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string failure;  // non-empty when a loss evaluation was non-finite

  bool ok(double tolerance) const { return failure.empty() && max_rel_error < tolerance; }
  std::string summary() const;
};

inline constexpr double default_grad_eps(float) { return 1e-3; }
inline constexpr double default_grad_eps(double) { return 1e-5; }

template <typename T>
using ScalarFn = std::function<Var<T>(ParamStore<T>&)>;

/// Checks every trainable entry of `params`. At least `min_coords`
/// coordinates per tensor (all of them when the tensor is smaller) are
/// sampled with a generator seeded by `seed`. With refinements > 0 each
/// coordinate is also differenced at eps/3, eps/9, ... and the smallest error
/// is kept, so a step that straddles a ReLU kink does not decide the result.
template <typename T>
GradCheckReport grad_check(const ScalarFn<T>& f, ParamStore<T>& params, double eps, std::uint64_t seed,
                           int min_coords = 32, int refinements = 0);

}  // namespace spg
