#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dsct/errors.hpp"
#include "dsct/ops.hpp"
#include "eigen_map.hpp"

namespace dsct {

namespace {
thread_local std::uint64_t g_flops = 0;
thread_local std::uint64_t* g_relu_digest = nullptr;
}  // namespace

std::uint64_t executed_flops() { return g_flops; }
void reset_executed_flops() { g_flops = 0; }
void detail::count_flops(std::uint64_t n) { g_flops += n; }
std::uint64_t*& detail::relu_pattern_digest() { return g_relu_digest; }

template <typename T>
void BatchNormState<T>::reset_running_stats() {
  running_mean.fill(T(0));
  running_var.fill(T(1));
  populated = true;
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  using detail::ConstMatMap;
  using detail::MatMap;
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) {
    throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " +
                         shape_str(ws));
  }
  if (bias.shape() != Shape{ws[1]}) {
    throw DimensionError("linear: bias must be [" + std::to_string(ws[1]) + "]");
  }
  const std::size_t din = ws[0];
  const std::size_t dout = ws[1];
  const std::size_t rows = x.value().numel() / din;
  Shape out_shape = xs;
  out_shape.back() = dout;
  Tensor<T> out(out_shape);
  MatMap<T> o(out.data(), rows, dout);
  o.noalias() = ConstMatMap<T>(x.value().data(), rows, din) *
                ConstMatMap<T>(weight.value().data(), din, dout);
  const T* b = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * dout;
    for (std::size_t j = 0; j < dout; ++j) row[j] += b[j];
  }
  detail::count_flops(2ull * rows * din * dout);
  return make_op<T>("linear", std::move(out), {x, weight, bias},
                    [rows, din, dout](const Tensor<T>& g, ParentGrads<T>& p) {
                      ConstMatMap<T> go(g.data(), rows, dout);
                      if (auto* gx = p[0]) {
                        MatMap<T>(gx->data(), rows, din).noalias() +=
                            go * ConstMatMap<T>(p.value(1).data(), din, dout).transpose();
                      }
                      if (auto* gw = p[1]) {
                        MatMap<T>(gw->data(), din, dout).noalias() +=
                            ConstMatMap<T>(p.value(0).data(), rows, din).transpose() * go;
                      }
                      if (auto* gb = p[2]) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* row = g.data() + r * dout;
                          for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += row[j];
                        }
                      }
                    });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  using detail::ConstMatMap;
  using detail::MatMap;
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) {
    throw DimensionError("matmul: expected batched [B,M,K] operands, got " + shape_str(as) +
                         " and " + shape_str(bs));
  }
  const std::size_t batch = as[0], m = as[1], k = as[2];
  const std::size_t bk = transpose_b ? bs[2] : bs[1];
  const std::size_t n = transpose_b ? bs[1] : bs[2];
  if (bk != k) {
    throw DimensionError("matmul: inner extents differ: " + shape_str(as) + " vs " + shape_str(bs));
  }
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap<T> am(a.value().data() + i * m * k, m, k);
    MatMap<T> om(out.data() + i * m * n, m, n);
    if (transpose_b) {
      om.noalias() = am * ConstMatMap<T>(b.value().data() + i * n * k, n, k).transpose();
    } else {
      om.noalias() = am * ConstMatMap<T>(b.value().data() + i * k * n, k, n);
    }
  }
  detail::count_flops(2ull * batch * m * n * k);
  return make_op<T>(
      "matmul", std::move(out), {a, b},
      [batch, m, k, n, transpose_b](const Tensor<T>& g, ParentGrads<T>& p) {
        Tensor<T>* ga = p[0];
        Tensor<T>* gb = p[1];
        const T* av = p.value(0).data();
        const T* bv = p.value(1).data();
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatMap<T> go(g.data() + i * m * n, m, n);
          if (ga) {
            MatMap<T> gam(ga->data() + i * m * k, m, k);
            if (transpose_b) {
              gam.noalias() += go * ConstMatMap<T>(bv + i * n * k, n, k);
            } else {
              gam.noalias() += go * ConstMatMap<T>(bv + i * k * n, k, n).transpose();
            }
          }
          if (gb) {
            ConstMatMap<T> am(av + i * m * k, m, k);
            if (transpose_b) {
              MatMap<T>(gb->data() + i * n * k, n, k).noalias() += go.transpose() * am;
            } else {
              MatMap<T>(gb->data() + i * k * n, k, n).noalias() += am.transpose() * go;
            }
          }
        }
      });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const Tensor<T>& xv = x.value();
  for (T v : xv.values()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  Tensor<T> out(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* src = xv.data() + o * len * inner + in;
      T* dst = out.data() + o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, src[i * inner]);
      T total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        dst[i * inner] = std::exp(src[i * inner] - mx);
        total += dst[i * inner];
      }
      const T inv = T(1) / total;
      for (std::size_t i = 0; i < len; ++i) dst[i * inner] *= inv;
    }
  }
  return make_op<T>("softmax", out, {x},
                    [y = out, outer, inner, len](const Tensor<T>& g, ParentGrads<T>& p) {
                      Tensor<T>* gx = p[0];
                      if (!gx) return;
                      for (std::size_t o = 0; o < outer; ++o) {
                        for (std::size_t in = 0; in < inner; ++in) {
                          const std::size_t base = o * len * inner + in;
                          T dot = 0;
                          for (std::size_t i = 0; i < len; ++i) {
                            dot += g[base + i * inner] * y[base + i * inner];
                          }
                          for (std::size_t i = 0; i < len; ++i) {
                            const std::size_t j = base + i * inner;
                            (*gx)[j] += y[j] * (g[j] - dot);
                          }
                        }
                      }
                    });
}

namespace {

// Normalizes `count` groups of `group` contiguous values, writing xhat and
// the per-group reciprocal standard deviation.
template <typename T>
void normalize_groups(const T* x, std::size_t count, std::size_t group, T eps, T* xhat, T* rstd) {
  for (std::size_t gi = 0; gi < count; ++gi) {
    const T* src = x + gi * group;
    double mean = 0;
    for (std::size_t i = 0; i < group; ++i) mean += src[i];
    mean /= static_cast<double>(group);
    double var = 0;
    for (std::size_t i = 0; i < group; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(group);
    const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[gi] = static_cast<T>(r);
    for (std::size_t i = 0; i < group; ++i) {
      xhat[gi * group + i] = static_cast<T>((src[i] - mean) * r);
    }
  }
}

}  // namespace

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  std::size_t normalized_rank, T eps) {
  const Shape& s = x.shape();
  if (eps <= T(0)) throw DimensionError("layer_norm: eps must be positive");
  if (normalized_rank == 0 || normalized_rank > s.size()) {
    throw DimensionError("layer_norm: invalid normalized rank for " + shape_str(s));
  }
  const Shape trailing(s.end() - static_cast<std::ptrdiff_t>(normalized_rank), s.end());
  require_same_shape(gamma.shape(), trailing, "layer_norm gamma");
  require_same_shape(beta.shape(), trailing, "layer_norm beta");
  const std::size_t group = shape_numel(trailing);
  const std::size_t count = x.value().numel() / group;
  Tensor<T> xhat(s);
  std::vector<T> rstd(count);
  normalize_groups(x.value().data(), count, group, eps, xhat.data(), rstd.data());
  Tensor<T> out(s);
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
  for (std::size_t gi = 0; gi < count; ++gi) {
    for (std::size_t i = 0; i < group; ++i) {
      const std::size_t j = gi * group + i;
      out[j] = xhat[j] * gm[i] + bt[i];
    }
  }
  return make_op<T>(
      "layer_norm", std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd), count, group](const Tensor<T>& g,
                                                                      ParentGrads<T>& p) {
        const T* gm = p.value(1).data();
        if (auto* gg = p[1]) {
          for (std::size_t j = 0; j < g.numel(); ++j) (*gg)[j % group] += g[j] * xhat[j];
        }
        if (auto* gb = p[2]) {
          for (std::size_t j = 0; j < g.numel(); ++j) (*gb)[j % group] += g[j];
        }
        if (auto* gx = p[0]) {
          const T inv_n = T(1) / static_cast<T>(group);
          for (std::size_t gi = 0; gi < count; ++gi) {
            T sum_gh = 0, sum_ghx = 0;
            for (std::size_t i = 0; i < group; ++i) {
              const std::size_t j = gi * group + i;
              const T gh = g[j] * gm[i];
              sum_gh += gh;
              sum_ghx += gh * xhat[j];
            }
            const T mean_gh = sum_gh * inv_n;
            const T mean_ghx = sum_ghx * inv_n;
            for (std::size_t i = 0; i < group; ++i) {
              const std::size_t j = gi * group + i;
              (*gx)[j] += rstd[gi] * (g[j] * gm[i] - mean_gh - xhat[j] * mean_ghx);
            }
          }
        }
      });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, Mode mode) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("batch_norm: expected [N,C,H,W], got " + shape_str(s));
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  require_same_shape(gamma.shape(), Shape{c}, "batch_norm gamma");
  require_same_shape(beta.shape(), Shape{c}, "batch_norm beta");
  if (state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c}) {
    throw DimensionError("batch_norm: running statistics do not match channel count");
  }
  if (mode == Mode::eval && !state.populated) {
    throw StateError("batch_norm: eval mode requires populated running statistics");
  }
  const T* xv = x.value().data();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
  Tensor<T> xhat(s);
  std::vector<T> rstd(c);
  const std::size_t count = n * hw;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* plane = xv + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      }
      mean = acc / static_cast<double>(count);
      double sq = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* plane = xv + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = plane[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const T m = state.momentum;
      state.running_mean[ch] = (T(1) - m) * state.running_mean[ch] + m * static_cast<T>(mean);
      state.running_var[ch] = (T(1) - m) * state.running_var[ch] + m * static_cast<T>(var);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double r = 1.0 / std::sqrt(var + static_cast<double>(state.eps));
    rstd[ch] = static_cast<T>(r);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[off + i] = static_cast<T>((xv[off + i] - mean) * r);
      }
    }
  }
  if (mode == Mode::train) state.populated = true;
  Tensor<T> out(s);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[off + i] = xhat[off + i] * gm[ch] + bt[ch];
    }
  }
  const bool training = mode == Mode::train;
  return make_op<T>(
      "batch_norm", std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd), n, c, hw, training](const Tensor<T>& g,
                                                                            ParentGrads<T>& p) {
        const T* gm = p.value(1).data();
        Tensor<T>* gx = p[0];
        Tensor<T>* gg = p[1];
        Tensor<T>* gb = p[2];
        const T inv_count = T(1) / static_cast<T>(n * hw);
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * xhat[off + i];
            }
          }
          if (gg) (*gg)[ch] += sum_gx;
          if (gb) (*gb)[ch] += sum_g;
          if (!gx) continue;
          const T k = gm[ch] * rstd[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (training) {
                (*gx)[off + i] +=
                    k * (g[off + i] - sum_g * inv_count - xhat[off + i] * sum_gx * inv_count);
              } else {
                (*gx)[off + i] += k * g[off + i];
              }
            }
          }
        }
      });
}

template struct BatchNormState<float>;
template struct BatchNormState<double>;

#define DSCT_INSTANTIATE(T)                                                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool);                                  \
  template Var<T> softmax(const Var<T>&, std::size_t);                                         \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, T);     \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, Mode);

DSCT_INSTANTIATE(float)
DSCT_INSTANTIATE(double)
#undef DSCT_INSTANTIATE

}  // namespace dsct
