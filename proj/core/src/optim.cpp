#include "dsct/optim.hpp"

#include <cmath>

#include "dsct/errors.hpp"

namespace dsct {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParameterRefs<T>& params) {
  AdamState<T> s;
  for (const auto* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

template <typename T>
void adam_step(const ParameterRefs<T>& params, AdamState<T>& state, double lr,
               const AdamHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state does not match the parameter list");
  }
  if (!(lr > 0)) throw ConfigError("adam_step: learning rate must be positive");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(hyper.beta1, t);
  const double correct2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = *params[k];
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    require_same_shape(m.shape(), p.value.shape(), "adam_step");
    require_same_shape(p.grad.shape(), p.value.shape(), "adam_step");
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = lr * (mi / correct1) / (std::sqrt(vi / correct2) + hyper.eps);
      p.value[i] = static_cast<T>(p.value[i] - step);
    }
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  int drops = 0;
  for (std::size_t decay : cfg.lr_decay_epochs) drops += epoch >= decay;
  // One division by factor^drops; repeated division drifts off 1e-6.
  return cfg.learning_rate / std::pow(cfg.lr_decay_factor, drops);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(const ParameterRefs<float>&, AdamState<float>&, double, const AdamHyper&);
template void adam_step(const ParameterRefs<double>&, AdamState<double>&, double, const AdamHyper&);

}  // namespace dsct
