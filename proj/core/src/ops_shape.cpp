#include <algorithm>
#include <numeric>
#include <string>

#include "dsct/errors.hpp"
#include "dsct/ops.hpp"

namespace dsct {

namespace {

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[axes[i]];
  Tensor<T> out(out_shape);
  if (rank == 0) {
    out[0] = x[0];
    return out;
  }
  const Shape in_strides = row_major_strides(x.shape());
  Shape src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) src_stride[i] = in_strides[axes[i]];

  // Odometer over the output index; the innermost axis is walked in a tight loop.
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t inner_stride = src_stride[rank - 1];
  const T* src = x.data();
  T* dst = out.data();
  std::size_t offset = 0;
  for (std::size_t done = 0; done < out.numel(); done += inner) {
    const T* s = src + offset;
    for (std::size_t k = 0; k < inner; ++k) dst[done + k] = s[k * inner_stride];
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      offset += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      offset -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

void validate_permutation(const std::vector<std::size_t>& axes, std::size_t rank) {
  if (axes.size() != rank) throw DimensionError("permute: axes length must equal rank");
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: axes are not a permutation");
    seen[a] = true;
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  const Shape original = x.shape();
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_op<T>("reshape", std::move(out), {x},
                    [original](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        const T* src = g.data();
                        T* dst = gx->data();
                        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
                      }
                    });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes) {
  validate_permutation(axes, x.value().rank());
  std::vector<std::size_t> inverse(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
  return make_op<T>("permute", permute_tensor(x.value(), axes), {x},
                    [inverse](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) gx->add_(permute_tensor(g, inverse));
                    });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat needs at least one input");
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: off-axis extents differ: " + shape_str(first) + " vs " +
                             shape_str(s));
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  Tensor<T> out(out_shape);
  const AxisSplit sp = split_at(out_shape, axis);
  const std::size_t out_row = out_shape[axis] * sp.inner;
  std::size_t base = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t row = extents[k] * sp.inner;
    const T* src = xs[k].value().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(src + o * row, row, out.data() + o * out_row + base);
    }
    base += row;
  }
  return make_op<T>("concat", std::move(out), xs,
                    [extents, sp, out_row](const Tensor<T>& g, ParentGrads<T>& p) {
                      std::size_t base = 0;
                      for (std::size_t k = 0; k < extents.size(); ++k) {
                        const std::size_t row = extents[k] * sp.inner;
                        if (auto* gx = p[k]) {
                          for (std::size_t o = 0; o < sp.outer; ++o) {
                            const T* src = g.data() + o * out_row + base;
                            T* dst = gx->data() + o * row;
                            for (std::size_t i = 0; i < row; ++i) dst[i] += src[i];
                          }
                        }
                        base += row;
                      }
                    });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in_shape = x.shape();
  if (axis >= in_shape.size()) throw DimensionError("slice: axis out of range");
  if (length == 0 || start + length > in_shape[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside extent " +
                         std::to_string(in_shape[axis]));
  }
  Shape out_shape = in_shape;
  out_shape[axis] = length;
  const AxisSplit sp = split_at(in_shape, axis);
  const std::size_t in_row = in_shape[axis] * sp.inner;
  const std::size_t out_row = length * sp.inner;
  const std::size_t offset = start * sp.inner;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.value().data() + o * in_row + offset, out_row, out.data() + o * out_row);
  }
  return make_op<T>("slice", std::move(out), {x},
                    [sp, in_row, out_row, offset](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        for (std::size_t o = 0; o < sp.outer; ++o) {
                          const T* src = g.data() + o * out_row;
                          T* dst = gx->data() + o * in_row + offset;
                          for (std::size_t i = 0; i < out_row; ++i) dst[i] += src[i];
                        }
                      }
                    });
}

template <typename T>
std::vector<Var<T>> split(const Var<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
  if (axis >= x.value().rank()) throw DimensionError("split: axis out of range");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != x.dim(axis)) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but extent is " +
                         std::to_string(x.dim(axis)));
  }
  std::vector<Var<T>> parts;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    parts.push_back(slice(x, axis, start, s));
    start += s;
  }
  return parts;
}

namespace {

template <typename T>
void shuffle_kernel(const T* in, T* out, std::size_t n, std::size_t c_out, std::size_t h,
                    std::size_t w, std::size_t r, bool forward) {
  // forward: in [n, c_out*r*r, h, w] -> out [n, c_out, h*r, w*r]; else the reverse.
  const std::size_t hw = h * w;
  const std::size_t ow = w * r;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < c_out; ++c) {
      for (std::size_t dy = 0; dy < r; ++dy) {
        for (std::size_t dx = 0; dx < r; ++dx) {
          const std::size_t ic = (b * c_out + c) * r * r + dy * r + dx;
          const T* plane_in = in + ic * hw;
          T* plane_out = out + (b * c_out + c) * hw * r * r;
          const T* plane_big = in + (b * c_out + c) * hw * r * r;
          T* plane_small = out + ic * hw;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              const std::size_t big = (y * r + dy) * ow + x * r + dx;
              if (forward) {
                plane_out[big] = plane_in[y * w + x];
              } else {
                plane_small[y * w + x] = plane_big[big];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> shuffle_tensor(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  const std::size_t c_out = s[1] / (r * r);
  Tensor<T> out(Shape{s[0], c_out, s[2] * r, s[3] * r});
  shuffle_kernel(x.data(), out.data(), s[0], c_out, s[2], s[3], r, true);
  return out;
}

template <typename T>
Tensor<T> unshuffle_tensor(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  const std::size_t h = s[2] / r;
  const std::size_t w = s[3] / r;
  Tensor<T> out(Shape{s[0], s[1] * r * r, h, w});
  shuffle_kernel(x.data(), out.data(), s[0], s[1], h, w, r, false);
  return out;
}

}  // namespace

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
  require_rank(x.shape(), 4, "pixel_shuffle");
  if (r == 0 || x.dim(1) % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: channels " + std::to_string(x.dim(1)) +
                         " not divisible by r^2 = " + std::to_string(r * r));
  }
  return make_op<T>("pixel_shuffle", shuffle_tensor(x.value(), r), {x},
                    [r](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) gx->add_(unshuffle_tensor(g, r));
                    });
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::size_t r) {
  require_rank(x.shape(), 4, "pixel_unshuffle");
  if (r == 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw DimensionError("pixel_unshuffle: spatial extents not divisible by r");
  }
  return make_op<T>("pixel_unshuffle", unshuffle_tensor(x.value(), r), {x},
                    [r](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) gx->add_(shuffle_tensor(g, r));
                    });
}

namespace {

inline std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("pad_reflect: need at least two axes");
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (std::max(top, bottom) >= h || std::max(left, right) >= w) {
    throw DimensionError("pad_reflect: padding must be smaller than the extent " + shape_str(s));
  }
  const std::size_t oh = h + top + bottom;
  const std::size_t ow = w + left + right;
  Shape out_shape = s;
  out_shape[s.size() - 2] = oh;
  out_shape[s.size() - 1] = ow;
  const std::size_t planes = x.value().numel() / (h * w);

  // Source offset within a plane for every output pixel.
  std::vector<std::size_t> src_index(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(top),
                                         static_cast<std::ptrdiff_t>(h));
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const std::size_t sx = reflect_index(
          static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(left), static_cast<std::ptrdiff_t>(w));
      src_index[y * ow + xx] = sy * w + sx;
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.value().data() + pl * h * w;
    T* dst = out.data() + pl * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) dst[i] = src[src_index[i]];
  }
  return make_op<T>("pad_reflect", std::move(out), {x},
                    [src_index = std::move(src_index), planes, h, w, oh, ow](const Tensor<T>& g,
                                                                             ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        for (std::size_t pl = 0; pl < planes; ++pl) {
                          const T* src = g.data() + pl * oh * ow;
                          T* dst = gx->data() + pl * h * w;
                          for (std::size_t i = 0; i < oh * ow; ++i) dst[src_index[i]] += src[i];
                        }
                      }
                    });
}

template <typename T>
Var<T> crop(const Var<T>& x, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("crop: need at least two axes");
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (height == 0 || width == 0 || top + height > h || left + width > w) {
    throw DimensionError("crop: window exceeds " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[s.size() - 2] = height;
  out_shape[s.size() - 1] = width;
  const std::size_t planes = x.value().numel() / (h * w);
  Tensor<T> out(out_shape);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(x.value().data() + pl * h * w + (top + y) * w + left, width,
                  out.data() + (pl * height + y) * width);
    }
  }
  return make_op<T>("crop", std::move(out), {x},
                    [=](const Tensor<T>& g, ParentGrads<T>& p) {
                      if (auto* gx = p[0]) {
                        for (std::size_t pl = 0; pl < planes; ++pl) {
                          for (std::size_t y = 0; y < height; ++y) {
                            const T* src = g.data() + (pl * height + y) * width;
                            T* dst = gx->data() + pl * h * w + (top + y) * w + left;
                            for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                          }
                        }
                      }
                    });
}

#define DSCT_INSTANTIATE(T)                                                                  \
  template Var<T> reshape(const Var<T>&, Shape);                                             \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                   \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                          \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);               \
  template std::vector<Var<T>> split(const Var<T>&, std::size_t, const std::vector<std::size_t>&); \
  template Var<T> pixel_shuffle(const Var<T>&, std::size_t);                                 \
  template Var<T> pixel_unshuffle(const Var<T>&, std::size_t);                               \
  template Var<T> pad_reflect(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template Var<T> crop(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t);

DSCT_INSTANTIATE(float)
DSCT_INSTANTIATE(double)
#undef DSCT_INSTANTIATE

}  // namespace dsct
