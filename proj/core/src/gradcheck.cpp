#include "spg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace spg {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  if (!failure.empty()) os << "FAILED: " << failure << "\n";
  for (const auto& e : entries)
    os << "  " << e.name << ": " << e.coords_checked << " coords, max rel err " << e.max_rel_error
       << "\n";
  os << "max rel err " << max_rel_error;
  return os.str();
}

template <typename T>
GradCheckReport grad_check(const ScalarFn<T>& f, ParamStore<T>& params, double eps, std::uint64_t seed,
                           int min_coords, int refinements) {
  GradCheckReport report;
  params.zero_grad();
  {
    Tape<T> tape;
    Var<T> loss = f(params);
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      report.failure = "non-finite loss at the unperturbed point";
      return report;
    }
    tape.backward(loss);
  }

  auto eval = [&]() -> double { return static_cast<double>(f(params).item()); };

  std::mt19937_64 rng(seed);
  for (auto& [name, entry] : params.entries()) {
    if (!entry.trainable) continue;
    Var<T>& var = entry.var;
    const std::size_t count = var.value().size();
    std::vector<std::size_t> coords(count);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (count > static_cast<std::size_t>(min_coords)) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(min_coords));
    }
    GradCheckEntry e{name, 0, 0.0, 0.0};
    for (std::size_t i : coords) {
      const double g_ad = var.has_grad() ? static_cast<double>(var.grad()[i]) : 0.0;
      T& slot = var.mutable_value()[i];
      const T original = slot;
      double rel = std::numeric_limits<double>::infinity();
      double h = eps;
      auto at = [&](double offset) {
        slot = static_cast<T>(original + offset);
        const double v = eval();
        slot = original;
        return v;
      };
      // Effective step after rounding into T.
      auto step_of = [&](double hh) {
        return static_cast<double>(static_cast<T>(original + hh)) - static_cast<double>(static_cast<T>(original - hh));
      };
      for (int k = 0; k <= refinements; ++k, h /= 3) {
        const double up = at(h), down = at(-h);
        if (!std::isfinite(up) || !std::isfinite(down)) {
          report.failure = "non-finite loss while perturbing " + name;
          report.entries.push_back(e);
          return report;
        }
        const double g_fd = (up - down) / step_of(h);
        rel = std::min(rel, std::abs(g_ad - g_fd) / std::max(1.0, std::abs(g_fd)));
        if (refinements > 0) {
          // five-point stencil, O(h^4)
          const double up2 = at(2 * h), down2 = at(-2 * h);
          if (std::isfinite(up2) && std::isfinite(down2)) {
            const double g5 = (8 * (up - down) - (up2 - down2)) / (6 * step_of(h));
            rel = std::min(rel, std::abs(g_ad - g5) / std::max(1.0, std::abs(g5)));
          }
        }
      }
      e.max_rel_error = std::max(e.max_rel_error, rel);
      e.max_abs_grad = std::max(e.max_abs_grad, std::abs(g_ad));
      ++e.coords_checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.entries.push_back(e);
  }
  return report;
}

template GradCheckReport grad_check<float>(const ScalarFn<float>&, ParamStore<float>&, double,
                                           std::uint64_t, int, int);
template GradCheckReport grad_check<double>(const ScalarFn<double>&, ParamStore<double>&, double,
                                            std::uint64_t, int, int);

}  // namespace spg
