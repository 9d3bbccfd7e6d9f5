#pragma once

#include <cstddef>
#include <string>

#include "dsct/layers.hpp"

namespace dsct {

/// Channel self-attention projections. They act along the per-patch pixel
/// axis (P*P -> key_dim), so the attention map relates channels (C x C).
/// Query/key/value projections carry no bias here or in MultiHeadAttention.
template <typename T>
struct ChannelAttention {
  Linear<T> query, key, value;

  ChannelAttention() = default;
  ChannelAttention(const std::string& name, std::size_t tokens, std::size_t key_dim,
                   Initializer& init);
  void collect(ParameterRefs<T>& out);
};

/// Multi-head self-attention over the tokens of one patch; heads are
/// concatenated and mixed by `mix`.
template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, mix;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t width, std::size_t heads,
                     Initializer& init);
  void collect(ParameterRefs<T>& out);
};

/// width -> ratio*width -> width with ReLU in between.
template <typename T>
struct Mlp {
  Linear<T> expand, project;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t width, std::size_t ratio, Initializer& init);
  Var<T> operator()(const Var<T>& x) const;
  void collect(ParameterRefs<T>& out);
};

template <typename T>
struct ScemParams {
  std::size_t patch = 4;
  LayerNorm<T> attn_norm;  // shared by both attention branches
  ChannelAttention<T> channel;
  MultiHeadAttention<T> spatial;
  LayerNorm<T> mlp_norm;
  Mlp<T> mlp;

  ScemParams() = default;
  ScemParams(const std::string& name, std::size_t channels, std::size_t patch, std::size_t heads,
             std::size_t mlp_ratio, Initializer& init);

  // Zeroes the value/mix projections and the MLP output layer so the block
  // reduces to its residual path.
  void zero_branches();
  void collect(ParameterRefs<T>& out);
};

enum class AggregationMode { tfam, mean, conv };

/// Temporal aggregation of three frame features.
template <typename T>
struct TfamParams {
  AggregationMode mode = AggregationMode::tfam;
  std::size_t patch = 4;
  // tfam: concat(3C) -> 3x3 conv to C; conv mode: the only layer.
  Conv2d<T> fuse;
  LayerNorm<T> attn_norm;
  MultiHeadAttention<T> attention;
  LayerNorm<T> mlp_norm;
  Mlp<T> mlp;
  Conv2d<T> post;

  TfamParams() = default;
  TfamParams(const std::string& name, AggregationMode mode, std::size_t channels,
             std::size_t patch, std::size_t heads, std::size_t mlp_ratio, Initializer& init);

  void zero_branches();
  void collect(ParameterRefs<T>& out);
};

/// [N, C, H, W] -> [N * (H/P) * (W/P), P*P, C]; windows ordered row-major,
/// tokens inside a window row-major.
template <typename T>
Var<T> patch_partition(const Var<T>& x, std::size_t patch);

/// Exact inverse of patch_partition for an [N, C, H, W] target.
template <typename T>
Var<T> patch_merge(const Var<T>& tokens, const Shape& image_shape, std::size_t patch);

/// Per patch: rows of the (C, P*P) matrix are projected to Q, K, V; the
/// softmax(QK^T / sqrt(d_k)) map is C x C. `attention_map`, if given,
/// receives the [B, C, C] map.
template <typename T>
Var<T> channel_self_attention(const Var<T>& tokens, const ChannelAttention<T>& params,
                              Var<T>* attention_map = nullptr);

/// Standard multi-head attention inside each patch; per-head maps are
/// [B * heads, P*P, P*P]. Throws ConfigError if C is not divisible by heads.
template <typename T>
Var<T> spatial_msa(const Var<T>& tokens, const MultiHeadAttention<T>& params,
                   Var<T>* attention_map = nullptr);

/// X~ = SA(LN(X)) + MSA(LN(X)) + X, then MLP(LN(X~)) + X~, on [N, C, H, W].
template <typename T>
Var<T> scem_forward(const Var<T>& x, const ScemParams<T>& params);

/// Aggregates three [N, C, H, W] features into one of the same shape.
template <typename T>
Var<T> tfam_forward(const Var<T>& prev, const Var<T>& cur, const Var<T>& next,
                    const TfamParams<T>& params);

std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(const std::string& text);

}  // namespace dsct
