#include "dsct/grad_check.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsct/ops.hpp"
#include "dsct/rng.hpp"

namespace dsct {

namespace {

struct Evaluation {
  double loss = 0;
  std::uint64_t relu_pattern = 0;
};

Evaluation evaluate(const std::function<Var<double>()>& loss_fn) {
  NoGradGuard guard;
  std::uint64_t digest = 1469598103934665603ull;
  detail::relu_pattern_digest() = &digest;
  double loss = 0;
  try {
    loss = loss_fn().value().item();
  } catch (...) {
    detail::relu_pattern_digest() = nullptr;
    throw;
  }
  detail::relu_pattern_digest() = nullptr;
  return {loss, digest};
}

}  // namespace

GradCheckResult grad_check(const std::function<Var<double>()>& loss_fn,
                           const std::vector<Parameter<double>*>& targets,
                           const GradCheckOptions& options) {
  for (auto* t : targets) t->zero_grad();
  {
    Var<double> loss = loss_fn();
    backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(targets.size());
  for (auto* t : targets) analytic.push_back(t->grad);

  GradCheckResult result;
  RngStream picker(options.seed, StreamPurpose::test, {0x6763u, 0, 0});
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Parameter<double>& target = *targets[ti];
    const std::size_t numel = target.value.numel();
    std::vector<std::size_t> coords(numel);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_target != 0 && options.max_coords_per_target < numel) {
      // Partial Fisher-Yates: the first k entries become a uniform sample.
      for (std::size_t i = 0; i < options.max_coords_per_target; ++i) {
        std::swap(coords[i], coords[i + picker.below(numel - i)]);
      }
      coords.resize(options.max_coords_per_target);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double original = target.value[idx];
      double h = options.eps * std::max(1.0, std::abs(original));
      bool smooth = false;
      double numeric = 0;
      for (unsigned attempt = 0; attempt <= options.kink_retries && !smooth; ++attempt, h /= 10) {
        // Fourth-order central stencil at +-h and +-2h.
        std::array<Evaluation, 4> at;
        const std::array<double, 4> offsets{h, -h, 2 * h, -2 * h};
        for (std::size_t k = 0; k < 4; ++k) {
          target.value[idx] = original + offsets[k];
          at[k] = evaluate(loss_fn);
        }
        target.value[idx] = original;
        smooth = std::all_of(at.begin(), at.end(), [&](const Evaluation& e) {
          return e.relu_pattern == at[0].relu_pattern;
        });
        numeric = (8.0 * (at[0].loss - at[1].loss) - (at[2].loss - at[3].loss)) / (12.0 * h);
      }
      if (!smooth) {
        ++result.kinked_coordinates;
        continue;
      }
      const double a = analytic[ti][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (result.coordinates_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_target = target.name;
        result.worst_index = idx;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

Var<double> random_projection(const Var<double>& x, std::uint64_t seed) {
  RngStream rng(seed, StreamPurpose::test, {0x70726aU, 0, 0});
  Tensor<double> r(x.shape());
  for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(x, Var<double>::constant(std::move(r))));
}

}  // namespace dsct
