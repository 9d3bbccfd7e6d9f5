#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsct/autograd.hpp"
#include "dsct/tensor.hpp"

namespace dsct {

// ---- pointwise --------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& x, T factor);
template <typename T>
Var<T> relu(const Var<T>& x);

// Sum of all elements; rank-0 result.
template <typename T>
Var<T> sum(const Var<T>& x);

// Elementwise mean of equally shaped inputs.
template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs);

// ---- restructuring ---------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename T>
std::vector<Var<T>> split(const Var<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes);

// [N, C*r*r, H, W] -> [N, C, r*H, r*W]; input channel c*r*r + dy*r + dx lands
// at output (c, r*y + dy, r*x + dx).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r);
template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::size_t r);

// Reflect-pads the two trailing (spatial) axes. Each pad must be smaller
// than the extent it reflects.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right);
template <typename T>
Var<T> crop(const Var<T>& x, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width);

// ---- convolution -----------------------------------------------------------

enum class PadMode : std::uint8_t { zero, reflect };

struct Padding {
  PadMode mode = PadMode::zero;
  std::size_t amount = 0;
};

/// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw] plus bias [Cout].
/// Output extent (H + 2*pad - kh) / stride + 1. Odd kernels only.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              Padding padding);

// ---- dense layers ----------------------------------------------------------

/// [..., Din] x [Din, Dout] + [Dout].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Batched product of [B, M, K] and [B, K, N] (or [B, N, K] when
/// `transpose_b`), giving [B, M, N].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

/// Max-subtracted softmax along `axis`. NaN input raises NumericError.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Normalizes over the trailing `normalized_rank` axes; gamma/beta have the
/// shape of those axes.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  std::size_t normalized_rank, T eps = T(1e-5));

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  bool populated = false;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormState() = default;
  // Unpopulated state for `channels` channels.
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}), running_var(Shape{channels}, T(1)) {}
  // Marks mean 0 / variance 1 as the current running statistics.
  void reset_running_stats();
};

enum class Mode : std::uint8_t { train, eval };

/// Per-channel normalization of [N,C,H,W]. Train mode uses batch statistics
/// over N*H*W (biased variance) and folds them into the running estimates
/// with `state.momentum`; eval mode uses the running estimates and throws
/// StateError if they were never populated.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, Mode mode);

// ---- losses ----------------------------------------------------------------

/// (1 / 2N) * sum ||pred_i - target_i||^2 with N the leading extent.
template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Tensor<T>& target);

// ---- FLOP accounting -------------------------------------------------------

// Multiply-accumulate work executed by conv2d/linear/matmul on this thread,
// counted as 2 flops per MAC.
std::uint64_t executed_flops();
void reset_executed_flops();

namespace detail {
void count_flops(std::uint64_t n);

// When non-null, relu folds the sign pattern of its input into this digest,
// letting a caller detect that two evaluations took different ReLU branches.
std::uint64_t*& relu_pattern_digest();
}  // namespace detail

}  // namespace dsct
