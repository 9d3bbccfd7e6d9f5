#include "dsct/layers.hpp"

#include <cmath>

namespace dsct {

template <typename T>
Tensor<T> Initializer::fan_in_uniform(Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(stream_.uniform(-bound, bound));
  return t;
}

template Tensor<float> Initializer::fan_in_uniform<float>(Shape, std::size_t);
template Tensor<double> Initializer::fan_in_uniform<double>(Shape, std::size_t);

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel,
                  std::size_t stride_, Initializer& init, bool with_bias)
    : has_bias(with_bias), stride(stride_), padding{PadMode::zero, kernel / 2} {
  const std::size_t fan_in = cin * kernel * kernel;
  weight = Parameter<T>(name + ".weight",
                        init.fan_in_uniform<T>(Shape{cout, cin, kernel, kernel}, fan_in));
  bias = Parameter<T>(name + ".bias", with_bias ? init.fan_in_uniform<T>(Shape{cout}, fan_in)
                                                : Tensor<T>(Shape{cout}));
}

template <typename T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) const {
  const Var<T> b = has_bias ? Var<T>::parameter(bias) : Var<T>::constant(bias.value);
  return conv2d(x, Var<T>::parameter(weight), b, stride, padding);
}

template <typename T>
void Conv2d<T>::zero() {
  weight.value.fill(T(0));
  bias.value.fill(T(0));
}

template <typename T>
void Conv2d<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t din, std::size_t dout, Initializer& init,
                  bool with_bias)
    : has_bias(with_bias) {
  weight = Parameter<T>(name + ".weight", init.fan_in_uniform<T>(Shape{din, dout}, din));
  bias = Parameter<T>(name + ".bias", with_bias ? init.fan_in_uniform<T>(Shape{dout}, din)
                                                : Tensor<T>(Shape{dout}));
}

template <typename T>
Var<T> Linear<T>::operator()(const Var<T>& x) const {
  const Var<T> b = has_bias ? Var<T>::parameter(bias) : Var<T>::constant(bias.value);
  return linear(x, Var<T>::parameter(weight), b);
}

template <typename T>
void Linear<T>::zero() {
  weight.value.fill(T(0));
  bias.value.fill(T(0));
}

template <typename T>
void Linear<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t width)
    : gamma(name + ".gamma", Tensor<T>(Shape{width}, T(1))),
      beta(name + ".beta", Tensor<T>(Shape{width})) {}

template <typename T>
Var<T> LayerNorm<T>::operator()(const Var<T>& x) const {
  return layer_norm(x, Var<T>::parameter(gamma), Var<T>::parameter(beta), 1, eps);
}

template <typename T>
void LayerNorm<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& name_, std::size_t channels)
    : name(name_),
      gamma(name_ + ".gamma", Tensor<T>(Shape{channels}, T(1))),
      beta(name_ + ".beta", Tensor<T>(Shape{channels})),
      state(channels) {
  state.reset_running_stats();
}

template <typename T>
Var<T> BatchNorm2d<T>::operator()(const Var<T>& x, Mode mode) {
  return batch_norm(x, Var<T>::parameter(gamma), Var<T>::parameter(beta), state, mode);
}

template <typename T>
void BatchNorm2d<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(BufferRefs<T>& out) {
  out.emplace_back(name, &state);
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;

}  // namespace dsct
