#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsct/grad_check.hpp"

namespace dsct {

struct GradientCase {
  std::string name;
  double tolerance = 1e-3;
  GradCheckResult result;

  bool passed() const { return result.passes(tolerance); }
};

struct GradientSuiteOptions {
  std::uint64_t seed = 1;
  bool include_full_model = false;
  // Coordinates sampled per parameter tensor in the full-model case
  // (0 checks every one).
  std::size_t full_model_coords = 0;
  // Called after each case completes.
  std::function<void(const GradientCase&)> on_case;
};

/// Finite-difference checks in f64 of every differentiable op, both
/// attention blocks, the aggregation and encoder blocks, and optionally the
/// whole reduced-width model (base 4, 32x32).
std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace dsct
