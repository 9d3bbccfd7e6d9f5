#include "dsct/attention.hpp"

#include <cmath>

#include "dsct/errors.hpp"

namespace dsct {

template <typename T>
ChannelAttention<T>::ChannelAttention(const std::string& name, std::size_t tokens,
                                      std::size_t key_dim, Initializer& init)
    : query(name + ".query", tokens, key_dim, init, false),
      key(name + ".key", tokens, key_dim, init, false),
      value(name + ".value", tokens, tokens, init, false) {}

template <typename T>
void ChannelAttention<T>::collect(ParameterRefs<T>& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const std::string& name, std::size_t width,
                                          std::size_t heads_, Initializer& init)
    : query(name + ".query", width, width, init, false),
      key(name + ".key", width, width, init, false),
      value(name + ".value", width, width, init, false),
      mix(name + ".mix", width, width, init),
      heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

template <typename T>
void MultiHeadAttention<T>::collect(ParameterRefs<T>& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  mix.collect(out);
}

template <typename T>
Mlp<T>::Mlp(const std::string& name, std::size_t width, std::size_t ratio, Initializer& init)
    : expand(name + ".expand", width, width * ratio, init),
      project(name + ".project", width * ratio, width, init) {}

template <typename T>
Var<T> Mlp<T>::operator()(const Var<T>& x) const {
  return project(relu(expand(x)));
}

template <typename T>
void Mlp<T>::collect(ParameterRefs<T>& out) {
  expand.collect(out);
  project.collect(out);
}

template <typename T>
ScemParams<T>::ScemParams(const std::string& name, std::size_t channels, std::size_t patch_,
                          std::size_t heads, std::size_t mlp_ratio, Initializer& init)
    : patch(patch_),
      attn_norm(name + ".attn_norm", channels),
      channel(name + ".channel", patch_ * patch_, patch_ * patch_, init),
      spatial(name + ".spatial", channels, heads, init),
      mlp_norm(name + ".mlp_norm", channels),
      mlp(name + ".mlp", channels, mlp_ratio, init) {}

template <typename T>
void ScemParams<T>::zero_branches() {
  channel.value.zero();
  spatial.mix.zero();
  mlp.project.zero();
}

template <typename T>
void ScemParams<T>::collect(ParameterRefs<T>& out) {
  attn_norm.collect(out);
  channel.collect(out);
  spatial.collect(out);
  mlp_norm.collect(out);
  mlp.collect(out);
}

template <typename T>
TfamParams<T>::TfamParams(const std::string& name, AggregationMode mode_, std::size_t channels,
                          std::size_t patch_, std::size_t heads, std::size_t mlp_ratio,
                          Initializer& init)
    : mode(mode_), patch(patch_) {
  if (mode == AggregationMode::mean) return;
  fuse = Conv2d<T>(name + ".fuse", 3 * channels, channels, 3, 1, init);
  if (mode == AggregationMode::conv) return;
  attn_norm = LayerNorm<T>(name + ".attn_norm", channels);
  attention = MultiHeadAttention<T>(name + ".attention", channels, heads, init);
  mlp_norm = LayerNorm<T>(name + ".mlp_norm", channels);
  mlp = Mlp<T>(name + ".mlp", channels, mlp_ratio, init);
  post = Conv2d<T>(name + ".post", channels, channels, 3, 1, init);
}

template <typename T>
void TfamParams<T>::zero_branches() {
  if (mode != AggregationMode::tfam) return;
  attention.mix.zero();
  mlp.project.zero();
  post.zero();
}

template <typename T>
void TfamParams<T>::collect(ParameterRefs<T>& out) {
  if (mode == AggregationMode::mean) return;
  fuse.collect(out);
  if (mode == AggregationMode::conv) return;
  attn_norm.collect(out);
  attention.collect(out);
  mlp_norm.collect(out);
  mlp.collect(out);
  post.collect(out);
}

template <typename T>
Var<T> patch_partition(const Var<T>& x, std::size_t patch) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("patch_partition: expected [N,C,H,W], got " + shape_str(s));
  if (patch == 0 || s[2] % patch != 0 || s[3] % patch != 0) {
    throw DimensionError("patch_partition: extents " + shape_str(s) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const std::size_t n = s[0], c = s[1], gh = s[2] / patch, gw = s[3] / patch;
  Var<T> v = reshape(x, Shape{n, c, gh, patch, gw, patch});
  v = permute(v, {0, 2, 4, 3, 5, 1});
  return reshape(v, Shape{n * gh * gw, patch * patch, c});
}

template <typename T>
Var<T> patch_merge(const Var<T>& tokens, const Shape& image_shape, std::size_t patch) {
  if (image_shape.size() != 4 || patch == 0 || image_shape[2] % patch != 0 ||
      image_shape[3] % patch != 0) {
    throw DimensionError("patch_merge: invalid target " + shape_str(image_shape));
  }
  const std::size_t n = image_shape[0], c = image_shape[1];
  const std::size_t gh = image_shape[2] / patch, gw = image_shape[3] / patch;
  if (tokens.shape() != Shape{n * gh * gw, patch * patch, c}) {
    throw DimensionError("patch_merge: tokens " + shape_str(tokens.shape()) +
                         " do not tile " + shape_str(image_shape));
  }
  Var<T> v = reshape(tokens, Shape{n, gh, gw, patch, patch, c});
  v = permute(v, {0, 5, 1, 3, 2, 4});
  return reshape(v, image_shape);
}

template <typename T>
Var<T> channel_self_attention(const Var<T>& tokens, const ChannelAttention<T>& params,
                              Var<T>* attention_map) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) throw DimensionError("channel_self_attention: expected [B, P*P, C]");
  const std::size_t t = s[1];
  const std::size_t key_dim = params.query.out_features();
  if (params.key.out_features() != key_dim) {
    throw DimensionError("channel_self_attention: query/key widths differ");
  }
  if (params.query.in_features() != t || params.key.in_features() != t ||
      params.value.in_features() != t || params.value.out_features() != t) {
    throw DimensionError("channel_self_attention: projections must map " + std::to_string(t) +
                         " pixels; value projection must preserve them");
  }
  const Var<T> rows = permute(tokens, {0, 2, 1});  // [B, C, P*P]
  const Var<T> q = params.query(rows);
  const Var<T> k = params.key(rows);
  const Var<T> v = params.value(rows);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(key_dim));
  const Var<T> attn = softmax(scale(matmul(q, k, true), inv_sqrt), 2);  // [B, C, C]
  if (attention_map) *attention_map = attn;
  return permute(matmul(attn, v), {0, 2, 1});
}

template <typename T>
Var<T> spatial_msa(const Var<T>& tokens, const MultiHeadAttention<T>& params,
                   Var<T>* attention_map) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) throw DimensionError("spatial_msa: expected [B, P*P, C]");
  const std::size_t b = s[0], t = s[1], c = s[2], h = params.heads;
  if (h == 0 || c % h != 0) {
    throw ConfigError("spatial_msa: width " + std::to_string(c) + " not divisible by " +
                      std::to_string(h) + " heads");
  }
  const std::size_t dh = c / h;
  auto heads_first = [&](const Var<T>& x) {
    return reshape(permute(reshape(x, Shape{b, t, h, dh}), {0, 2, 1, 3}), Shape{b * h, t, dh});
  };
  const Var<T> q = heads_first(params.query(tokens));
  const Var<T> k = heads_first(params.key(tokens));
  const Var<T> v = heads_first(params.value(tokens));
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const Var<T> attn = softmax(scale(matmul(q, k, true), inv_sqrt), 2);  // [B*h, T, T]
  if (attention_map) *attention_map = attn;
  Var<T> merged = reshape(matmul(attn, v), Shape{b, h, t, dh});
  merged = reshape(permute(merged, {0, 2, 1, 3}), Shape{b, t, c});
  return params.mix(merged);
}

template <typename T>
Var<T> scem_forward(const Var<T>& x, const ScemParams<T>& params) {
  const Var<T> tokens = patch_partition(x, params.patch);
  const Var<T> normed = params.attn_norm(tokens);
  const Var<T> channel_out = channel_self_attention(normed, params.channel);
  const Var<T> spatial_out = spatial_msa(normed, params.spatial);
  const Var<T> mixed = add(add(channel_out, spatial_out), tokens);
  const Var<T> out = add(params.mlp(params.mlp_norm(mixed)), mixed);
  return patch_merge(out, x.shape(), params.patch);
}

template <typename T>
Var<T> tfam_forward(const Var<T>& prev, const Var<T>& cur, const Var<T>& next,
                    const TfamParams<T>& params) {
  require_same_shape(prev.shape(), cur.shape(), "tfam_forward");
  require_same_shape(next.shape(), cur.shape(), "tfam_forward");
  switch (params.mode) {
    case AggregationMode::mean:
      return mean_of<T>({prev, cur, next});
    case AggregationMode::conv:
      return params.fuse(concat<T>({prev, cur, next}, 1));
    case AggregationMode::tfam:
      break;
  }
  const Var<T> fused = params.fuse(concat<T>({prev, cur, next}, 1));
  const Var<T> tokens = patch_partition(fused, params.patch);
  const Var<T> attended = add(spatial_msa(params.attn_norm(tokens), params.attention), tokens);
  const Var<T> refined = add(params.mlp(params.mlp_norm(attended)), attended);
  const Var<T> image = patch_merge(refined, fused.shape(), params.patch);
  return add(params.post(image), cur);
}

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::tfam: return "tfam";
    case AggregationMode::mean: return "mean";
    case AggregationMode::conv: return "conv";
  }
  return "tfam";
}

AggregationMode parse_aggregation_mode(const std::string& text) {
  if (text == "tfam") return AggregationMode::tfam;
  if (text == "mean") return AggregationMode::mean;
  if (text == "conv") return AggregationMode::conv;
  throw ConfigError("unknown aggregation_mode '" + text + "' (expected tfam|mean|conv)");
}

template struct ChannelAttention<float>;
template struct ChannelAttention<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct ScemParams<float>;
template struct ScemParams<double>;
template struct TfamParams<float>;
template struct TfamParams<double>;

#define DSCT_INSTANTIATE(T)                                                                  \
  template Var<T> patch_partition(const Var<T>&, std::size_t);                               \
  template Var<T> patch_merge(const Var<T>&, const Shape&, std::size_t);                     \
  template Var<T> channel_self_attention(const Var<T>&, const ChannelAttention<T>&, Var<T>*); \
  template Var<T> spatial_msa(const Var<T>&, const MultiHeadAttention<T>&, Var<T>*);         \
  template Var<T> scem_forward(const Var<T>&, const ScemParams<T>&);                         \
  template Var<T> tfam_forward(const Var<T>&, const Var<T>&, const Var<T>&, const TfamParams<T>&);

DSCT_INSTANTIATE(float)
DSCT_INSTANTIATE(double)
#undef DSCT_INSTANTIATE

}  // namespace dsct
