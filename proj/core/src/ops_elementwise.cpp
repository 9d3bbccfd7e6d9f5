#include <algorithm>

#include "dsct/errors.hpp"
#include "dsct/ops.hpp"

namespace dsct {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  out.add_(b.value());
  return make_op<T>("add", std::move(out), {a, b},
                    [](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* ga = p[0]) ga->add_(g);
                      if (auto* gb = p[1]) gb->add_(g);
                    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return make_op<T>("sub", std::move(out), {a, b},
                    [](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* ga = p[0]) ga->add_(g);
                      if (auto* gb = p[1]) {
                        for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
                      }
                    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return make_op<T>("mul", std::move(out), {a, b},
                    [](const Tensor<T>& g, ParentGrads<T>& p) {
                      const Tensor<T>& av = p.value(0);
                      const Tensor<T>& bv = p.value(1);
                      if (auto* ga = p[0]) {
                        for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
                      }
                      if (auto* gb = p[1]) {
                        for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
                      }
                    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  out.scale_(factor);
  return make_op<T>("scale", std::move(out), {x},
                    [factor](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += factor * g[i];
                      }
                    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  if (std::uint64_t* digest = detail::relu_pattern_digest()) {
    for (T v : out.values()) *digest = (*digest ^ (v > T(0) ? 0x9eu : 0x3du)) * 1099511628211ull;
  }
  if (std::uint64_t* digest = detail::relu_pattern_digest()) {
    for (T v : out.values()) *digest = (*digest ^ (v > T(0) ? 0x9eu : 0x3du)) * 1099511628211ull;
  }
  return make_op<T>("relu", std::move(out), {x},
                    [](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        const Tensor<T>& xv = p.value(0);
                        for (std::size_t i = 0; i < g.numel(); ++i) {
                          if (xv[i] > T(0)) (*gx)[i] += g[i];
                        }
                      }
                    });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  // Pairwise-free sequential sum in double keeps the order fixed.
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  return make_op<T>("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x},
                    [](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        const T s = g[0];
                        for (T& v : gx->values()) v += s;
                      }
                    });
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw DimensionError("mean_of needs at least one input");
  Tensor<T> out = xs.front().value();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape(out.shape(), xs[k].shape(), "mean_of");
    out.add_(xs[k].value());
  }
  const T inv = T(1) / static_cast<T>(xs.size());
  out.scale_(inv);
  return make_op<T>("mean_of", std::move(out), xs,
                    [inv, n = xs.size()](const Tensor<T>& g, ParentGrads<T>& p) {
                      for (std::size_t k = 0; k < n; ++k) {
                        if (auto* gx = p[k]) {
                          for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += inv * g[i];
                        }
                      }
                    });
}

template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "l2_loss");
  if (pred.value().rank() == 0) throw DimensionError("l2_loss expects a batch axis");
  const std::size_t batch = pred.dim(0);
  const Tensor<T>& pv = pred.value();
  double acc = 0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    const double d = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double loss = acc / (2.0 * static_cast<double>(batch));
  return make_op<T>("l2_loss", Tensor<T>::scalar(static_cast<T>(loss)), {pred},
                    [target, batch](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gp = p[0]) {
                        const Tensor<T>& pv = p.value(0);
                        const T s = g[0] / static_cast<T>(batch);
                        for (std::size_t i = 0; i < pv.numel(); ++i) {
                          (*gp)[i] += s * (pv[i] - target[i]);
                        }
                      }
                    });
}

#define DSCT_INSTANTIATE(T)                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                         \
  template Var<T> sub(const Var<T>&, const Var<T>&);                         \
  template Var<T> mul(const Var<T>&, const Var<T>&);                         \
  template Var<T> scale(const Var<T>&, T);                                   \
  template Var<T> relu(const Var<T>&);                                       \
  template Var<T> sum(const Var<T>&);                                        \
  template Var<T> mean_of(const std::vector<Var<T>>&);                       \
  template Var<T> l2_loss(const Var<T>&, const Tensor<T>&);

DSCT_INSTANTIATE(float)
DSCT_INSTANTIATE(double)
#undef DSCT_INSTANTIATE

}  // namespace dsct
