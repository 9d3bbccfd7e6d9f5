#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsct/autograd.hpp"
#include "dsct/ops.hpp"
#include "dsct/rng.hpp"

namespace dsct {

template <typename T>
using ParameterRefs = std::vector<Parameter<T>*>;

template <typename T>
using BufferRefs = std::vector<std::pair<std::string, BatchNormState<T>*>>;

/// Draws initial weights from one seeded stream in construction order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : stream_(seed, StreamPurpose::init) {}

  // Zero-mean uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
  template <typename T>
  Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in);

 private:
  RngStream stream_;
};

template <typename T>
struct Conv2d {
  Parameter<T> weight;  // [Cout, Cin, k, k]
  Parameter<T> bias;    // [Cout]; unused without a bias
  bool has_bias = true;
  std::size_t stride = 1;
  Padding padding;

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel,
         std::size_t stride, Initializer& init, bool with_bias = true);

  Var<T> operator()(const Var<T>& x) const;
  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t kernel() const { return weight.value.dim(2); }
  void zero();
  void collect(ParameterRefs<T>& out);
};

template <typename T>
struct Linear {
  Parameter<T> weight;  // [Din, Dout]
  Parameter<T> bias;    // [Dout]; unused without a bias
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, std::size_t din, std::size_t dout, Initializer& init,
         bool with_bias = true);

  Var<T> operator()(const Var<T>& x) const;
  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }
  void zero();
  void collect(ParameterRefs<T>& out);
};

template <typename T>
struct LayerNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width);

  Var<T> operator()(const Var<T>& x) const;
  void collect(ParameterRefs<T>& out);
};

template <typename T>
struct BatchNorm2d {
  std::string name;
  Parameter<T> gamma;
  Parameter<T> beta;
  BatchNormState<T> state;

  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, std::size_t channels);

  Var<T> operator()(const Var<T>& x, Mode mode);
  void collect(ParameterRefs<T>& out);
  void collect_buffers(BufferRefs<T>& out);
};

}  // namespace dsct
