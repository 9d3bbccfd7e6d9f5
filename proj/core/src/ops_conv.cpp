#include <string>
#include <vector>

#include "dsct/errors.hpp"
#include "dsct/ops.hpp"
#include "eigen_map.hpp"

namespace dsct {

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  PadMode mode;
  std::size_t oh, ow;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Source coordinate for a padded position, or -1 for a zero tap.
inline std::ptrdiff_t source_coord(std::ptrdiff_t i, std::ptrdiff_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zero) return -1;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return i;
}

// Row (c, ky, kx) and column (oy, ox) of the unfolded input of one sample.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  std::vector<std::ptrdiff_t> xs(g.ow);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          xs[ox] = source_coord(static_cast<std::ptrdiff_t>(ox) * stride +
                                    static_cast<std::ptrdiff_t>(kx) - pad,
                                w, g.mode);
        }
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t sy = source_coord(
              static_cast<std::ptrdiff_t>(oy) * stride + static_cast<std::ptrdiff_t>(ky) - pad, h,
              g.mode);
          T* out = row + oy * g.ow;
          if (sy < 0) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) out[ox] = T(0);
            continue;
          }
          const T* src = plane + sy * w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            out[ox] = xs[ox] < 0 ? T(0) : src[xs[ox]];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  std::vector<std::ptrdiff_t> xs(g.ow);
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          xs[ox] = source_coord(static_cast<std::ptrdiff_t>(ox) * stride +
                                    static_cast<std::ptrdiff_t>(kx) - pad,
                                w, g.mode);
        }
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t sy = source_coord(
              static_cast<std::ptrdiff_t>(oy) * stride + static_cast<std::ptrdiff_t>(ky) - pad, h,
              g.mode);
          if (sy < 0) continue;
          const T* in = row + oy * g.ow;
          T* dst = plane + sy * w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            if (xs[ox] >= 0) dst[xs[ox]] += in[ox];
          }
        }
      }
    }
  }
}

ConvGeometry make_geometry(const Shape& xs, const Shape& ws, const Shape& bs, std::size_t stride,
                           Padding padding) {
  if (xs.size() != 4) throw DimensionError("conv2d: input must be [N,Cin,H,W], got " + shape_str(xs));
  if (ws.size() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(ws));
  if (xs[1] != ws[1]) {
    throw DimensionError("conv2d: input channels " + std::to_string(xs[1]) +
                         " do not match weight channels " + std::to_string(ws[1]));
  }
  if (bs.size() != 1 || bs[0] != ws[0]) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(ws[0]) + "], got " + shape_str(bs));
  }
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding.amount,
                 padding.mode, 0, 0};
  const std::size_t ph = g.h + 2 * g.pad;
  const std::size_t pw = g.w + 2 * g.pad;
  if (ph < g.kh || pw < g.kw) throw DimensionError("conv2d: padded input smaller than kernel");
  if (g.mode == PadMode::reflect && (g.pad >= g.h || g.pad >= g.w)) {
    throw DimensionError("conv2d: reflect padding must be smaller than the input extent");
  }
  g.oh = (ph - g.kh) / stride + 1;
  g.ow = (pw - g.kw) / stride + 1;
  return g;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              Padding padding) {
  using detail::ConstMatMap;
  using detail::MatMap;
  const ConvGeometry g = make_geometry(x.shape(), weight.shape(), bias.shape(), stride, padding);
  const std::size_t K = g.patch();
  const std::size_t P = g.pixels();
  Tensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  std::vector<T> col(g.pointwise() ? 0 : K * P);
  ConstMatMap<T> wmat(weight.value().data(), g.cout, K);
  const T* b = bias.value().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.value().data() + n * g.cin * g.h * g.w;
    const T* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      colp = col.data();
    }
    MatMap<T> o(out.data() + n * g.cout * P, g.cout, P);
    o.noalias() = wmat * ConstMatMap<T>(colp, K, P);
    for (std::size_t c = 0; c < g.cout; ++c) o.row(c).array() += b[c];
  }
  detail::count_flops(2ull * g.n * g.cout * K * P);

  return make_op<T>(
      "conv2d", std::move(out), {x, weight, bias}, [g](const Tensor<T>& gout, ParentGrads<T>& p) {
        const std::size_t K = g.patch();
        const std::size_t P = g.pixels();
        Tensor<T>* gx = p[0];
        Tensor<T>* gw = p[1];
        Tensor<T>* gb = p[2];
        const Tensor<T>& xv = p.value(0);
        ConstMatMap<T> wmat(p.value(1).data(), g.cout, K);
        std::vector<T> col(g.pointwise() ? 0 : K * P);
        std::vector<T> dcol(g.pointwise() || !gx ? 0 : K * P);
        for (std::size_t n = 0; n < g.n; ++n) {
          ConstMatMap<T> go(gout.data() + n * g.cout * P, g.cout, P);
          if (gb) {
            for (std::size_t c = 0; c < g.cout; ++c) (*gb)[c] += go.row(c).sum();
          }
          if (gw) {
            const T* xn = xv.data() + n * g.cin * g.h * g.w;
            const T* colp = xn;
            if (!g.pointwise()) {
              im2col(xn, g, col.data());
              colp = col.data();
            }
            MatMap<T> gwm(gw->data(), g.cout, K);
            gwm.noalias() += go * ConstMatMap<T>(colp, K, P).transpose();
          }
          if (gx) {
            T* gxn = gx->data() + n * g.cin * g.h * g.w;
            if (g.pointwise()) {
              MatMap<T>(gxn, K, P).noalias() += wmat.transpose() * go;
            } else {
              MatMap<T>(dcol.data(), K, P).noalias() = wmat.transpose() * go;
              col2im(dcol.data(), g, gxn);
            }
          }
        }
      });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&, std::size_t, Padding);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&, std::size_t,
                            Padding);

}  // namespace dsct
