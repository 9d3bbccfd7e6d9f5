#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsct/autograd.hpp"

namespace dsct {

struct GradCheckOptions {
  // Step of the fourth-order central stencil (+-h, +-2h), scaled per
  // element by max(1, |x|).
  double eps = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample of this many per target.
  std::size_t max_coords_per_target = 0;
  std::uint64_t seed = 0;
  // If the stencil evaluations take different ReLU branches, the step is
  // divided by 10 and retried up to this many times; coordinates that still
  // straddle a kink are skipped and counted.
  unsigned kink_retries = 3;
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_target;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t coordinates_checked = 0;
  std::size_t kinked_coordinates = 0;

  bool passes(double tolerance) const { return max_relative_error < tolerance; }
};

/// Compares reverse-mode gradients of `loss_fn` against central differences.
///
/// `loss_fn` must build a fresh graph reading the current values of
/// `targets` (via Var::parameter) and return a single-element loss. The
/// reported error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const std::function<Var<double>()>& loss_fn,
                           const std::vector<Parameter<double>*>& targets,
                           const GradCheckOptions& options = {});

/// sum(x * R) for a fixed pseudo-random R in [-1, 1); turns a tensor-valued
/// subgraph into a scalar with non-degenerate gradients.
Var<double> random_projection(const Var<double>& x, std::uint64_t seed);

}  // namespace dsct
