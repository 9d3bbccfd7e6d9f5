#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsct/config.hpp"
#include "dsct/layers.hpp"

namespace dsct {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamHyper from(const TrainConfig& cfg) { return {cfg.beta1, cfg.beta2, cfg.adam_eps}; }
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;  // first moments, one per parameter
  std::vector<Tensor<T>> v;  // second moments
  std::uint64_t t = 0;

  // Zero moments shaped like `params`.
  static AdamState zeros_like(const ParameterRefs<T>& params);
};

/// One bias-corrected Adam update of every parameter from its `grad`.
template <typename T>
void adam_step(const ParameterRefs<T>& params, AdamState<T>& state, double lr,
               const AdamHyper& hyper = {});

/// Learning rate for a 1-indexed epoch: divided by the decay factor once for
/// every decay epoch that has been reached.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

}  // namespace dsct
