#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spg::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

using Checks = std::vector<CheckResult>;

/// Finite-difference gradient checks of every differentiable op and model
/// block, in float (tolerance 1e-3) and double (1e-5).
Checks grad_checks();
/// Closed-form point-to-segment distance and distance-map values.
Checks distance_map_checks();
/// SEAN normalization statistics, 1x1 region locality and theta endpoints.
Checks sean_checks();
/// Flow warping identities and the synthetic ground-truth flow bound.
Checks warp_checks();
/// Region average pooling and style broadcast.
Checks region_checks();
/// SSIM, masked SSIM, mIOU and the weighted objective arithmetic.
Checks metric_checks();
/// Loss closed forms and oracles.
Checks loss_checks();
/// Convolution, shuffle and serialization oracles.
Checks op_checks();
/// Synthetic data determinism and label coverage.
Checks synth_checks();

/// "grad", "invariants", "oracle" or "all"; throws std::invalid_argument otherwise.
Checks run_suite(const std::string& suite);

bool all_passed(const Checks& checks);
/// One "PASS|FAIL name: detail" line per check.
void print_checks(std::ostream& os, const Checks& checks);

}  // namespace spg::verify
