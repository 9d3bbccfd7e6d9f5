#pragma once

// Brute-force reference implementations used only as test oracles. They are
// written directly from the definitions, without sharing code with core.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Row-major dense array with explicit extents.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
};

// Cross-correlation with zero or reflect padding, six nested loops.
inline Array conv2d(const Array& x, const Array& w, const std::vector<double>& bias,
                    std::size_t stride, std::size_t pad, bool reflect) {
  const std::size_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const std::size_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Array out{{n, cout, oh, ow}, std::vector<double>(n * cout * oh * ow, 0.0)};
  auto sample = [&](std::size_t b, std::size_t c, long y, long xx) -> double {
    if (reflect) {
      if (y < 0) y = -y;
      if (y >= static_cast<long>(h)) y = 2 * static_cast<long>(h) - 2 - y;
      if (xx < 0) xx = -xx;
      if (xx >= static_cast<long>(wd)) xx = 2 * static_cast<long>(wd) - 2 - xx;
    } else if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) {
      return 0.0;
    }
    return x.data[((b * cin + c) * h + static_cast<std::size_t>(y)) * wd + static_cast<std::size_t>(xx)];
  };
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                acc += w.data[((o * cin + c) * kh + u) * kw + v] * sample(b, c, y, xx);
              }
          out.data[((b * cout + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

// a [m,k] times b [k,n].
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline std::vector<double> transpose(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

// Row-wise softmax of an [rows, cols] matrix, computed without max shift
// (inputs in tests are small).
inline std::vector<double> softmax_rows(std::vector<double> a, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(a[i * cols + j]);
    for (std::size_t j = 0; j < cols; ++j) a[i * cols + j] = std::exp(a[i * cols + j]) / z;
  }
  return a;
}

// Single-head scaled dot-product attention on [t, d] tokens with [d, dk]
// projections (no bias): softmax(Q K^T / sqrt(dk)) V.
inline std::vector<double> attention(const std::vector<double>& x, std::size_t t, std::size_t d,
                                     const std::vector<double>& wq, const std::vector<double>& wk,
                                     const std::vector<double>& wv, std::size_t dk, std::size_t dv) {
  const auto q = matmul(x, wq, t, d, dk);
  const auto k = matmul(x, wk, t, d, dk);
  const auto v = matmul(x, wv, t, d, dv);
  auto scores = matmul(q, transpose(k, t, dk), t, dk, t);
  for (double& s : scores) s /= std::sqrt(static_cast<double>(dk));
  return matmul(softmax_rows(scores, t, t), v, t, t, dv);
}

}  // namespace oracle
