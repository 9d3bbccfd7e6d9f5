#include <gtest/gtest.h>

#include "dsct/attention.hpp"
#include "dsct/errors.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dsct;
using testing_support::random_tensor;

namespace {

std::vector<double> vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

}  // namespace

TEST(PatchPartition, Shapes) {
  const auto x = cst(random_tensor<double>({1, 2, 4, 4}, 1));
  EXPECT_EQ(patch_partition(x, 4).shape(), (Shape{1, 16, 2}));
  EXPECT_EQ(patch_partition(x, 1).shape(), (Shape{16, 1, 2}));
  EXPECT_EQ(patch_partition(cst(Tensor<double>(Shape{2, 3, 8, 12})), 4).shape(), (Shape{12, 16, 3}));
  EXPECT_THROW(patch_partition(cst(Tensor<double>(Shape{1, 2, 6, 4})), 4), DimensionError);
}

TEST(PatchPartition, TokenLayout) {
  const auto x = random_tensor<double>({1, 3, 8, 8}, 2);
  const auto tokens = patch_partition(cst(x), 4).value();
  // window (1, 0) of the 2x2 grid is index 2; token (2, 3) inside it is 11.
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(tokens.at({2, 11, c}), x.at({0, c, 6, 3}));
}

TEST(PatchPartition, MergeIsExactInverse) {
  const auto x = random_tensor<double>({2, 5, 12, 8}, 3);
  for (std::size_t p : {1, 2, 4}) {
    EXPECT_EQ(patch_merge(patch_partition(cst(x), p), x.shape(), p).value(), x);
  }
}

TEST(ChannelAttention, MatchesDenseOracle) {
  Initializer init(4);
  ChannelAttention<double> params("ca", 16, 16, init);
  const auto x = random_tensor<double>({1, 16, 4}, 5);
  const auto y = channel_self_attention(cst(x), params).value();
  // Rows are channels: transpose to (C, P*P) and attend across the C rows.
  const auto rows = oracle::transpose(vec(x), 16, 4);
  const auto ref = oracle::transpose(
      oracle::attention(rows, 4, 16, vec(params.query.weight.value), vec(params.key.weight.value),
                        vec(params.value.weight.value), 16, 16),
      4, 16);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(ChannelAttention, SingleChannelReturnsValueRow) {
  Initializer init(6);
  ChannelAttention<double> params("ca", 16, 16, init);
  const auto x = random_tensor<double>({1, 16, 1}, 7);
  Var<double> map;
  const auto y = channel_self_attention(cst(x), params, &map).value();
  EXPECT_EQ(map.shape(), (Shape{1, 1, 1}));
  EXPECT_DOUBLE_EQ(map.value()[0], 1.0);
  const auto v = oracle::matmul(vec(x), vec(params.value.weight.value), 1, 16, 16);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(y[i], v[i], 1e-12);
}

TEST(ChannelAttention, EquivariantUnderChannelPermutation) {
  Initializer init(8);
  ChannelAttention<double> params("ca", 16, 16, init);
  const auto x = random_tensor<double>({2, 16, 5}, 9);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor<double> xp(x.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 16; ++t)
      for (std::size_t c = 0; c < 5; ++c) xp.at({b, t, c}) = x.at({b, t, perm[c]});
  const auto y = channel_self_attention(cst(x), params).value();
  const auto yp = channel_self_attention(cst(xp), params).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 16; ++t)
      for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(yp.at({b, t, c}), y.at({b, t, perm[c]}), 1e-12);
}

TEST(ChannelAttention, MapRowsSumToOne) {
  Initializer init(10);
  ChannelAttention<double> params("ca", 16, 16, init);
  Var<double> map;
  channel_self_attention(cst(random_tensor<double>({3, 16, 8}, 11, -4, 4)), params, &map);
  EXPECT_EQ(map.shape(), (Shape{3, 8, 8}));
  for (std::size_t r = 0; r < 24; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 8; ++j) s += map.value()[r * 8 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(ChannelAttention, KeyWidthMismatchIsDimensionError) {
  Initializer init(12);
  ChannelAttention<double> params("ca", 16, 16, init);
  params.key = Linear<double>("ca.key", 16, 8, init, false);
  EXPECT_THROW(channel_self_attention(cst(Tensor<double>(Shape{1, 16, 2})), params), DimensionError);
}

TEST(SpatialMsa, SingleHeadMatchesDenseOracle) {
  Initializer init(13);
  MultiHeadAttention<double> params("msa", 8, 1, init);
  const auto x = random_tensor<double>({1, 16, 8}, 14);
  const auto y = spatial_msa(cst(x), params).value();
  const auto att = oracle::attention(vec(x), 16, 8, vec(params.query.weight.value), vec(params.key.weight.value),
                                     vec(params.value.weight.value), 8, 8);
  auto ref = oracle::matmul(att, vec(params.mix.weight.value), 16, 8, 8);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += params.mix.bias.value[i % 8];
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(SpatialMsa, MultiHeadMatchesPerHeadOracle) {
  Initializer init(15);
  MultiHeadAttention<double> params("msa", 8, 4, init);
  const auto x = random_tensor<double>({1, 16, 8}, 16);
  const auto y = spatial_msa(cst(x), params).value();
  // Per head h: project with the full weights, keep columns [2h, 2h + 2).
  auto column_block = [](const std::vector<double>& w, std::size_t h) {
    std::vector<double> out(8 * 2);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t j = 0; j < 2; ++j) out[r * 2 + j] = w[r * 8 + 2 * h + j];
    return out;
  };
  std::vector<double> concat(16 * 8);
  for (std::size_t h = 0; h < 4; ++h) {
    const auto head = oracle::attention(vec(x), 16, 8, column_block(vec(params.query.weight.value), h),
                                        column_block(vec(params.key.weight.value), h),
                                        column_block(vec(params.value.weight.value), h), 2, 2);
    for (std::size_t t = 0; t < 16; ++t)
      for (std::size_t j = 0; j < 2; ++j) concat[t * 8 + 2 * h + j] = head[t * 2 + j];
  }
  auto ref = oracle::matmul(concat, vec(params.mix.weight.value), 16, 8, 8);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += params.mix.bias.value[i % 8];
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(SpatialMsa, IdenticalTokensGiveIdenticalOutputs) {
  Initializer init(17);
  MultiHeadAttention<double> params("msa", 8, 4, init);
  Tensor<double> x(Shape{1, 16, 8});
  const auto row = random_tensor<double>({8}, 18);
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t c = 0; c < 8; ++c) x.at({0, t, c}) = row[c];
  Var<double> map;
  const auto y = spatial_msa(cst(x), params, &map).value();
  EXPECT_EQ(map.shape(), (Shape{4, 16, 16}));
  for (double a : map.value().values()) EXPECT_NEAR(a, 1.0 / 16.0, 1e-12);
  for (std::size_t t = 1; t < 16; ++t)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at({0, t, c}), y.at({0, 0, c}), 1e-12);
}

TEST(SpatialMsa, EquivariantUnderTokenPermutation) {
  Initializer init(19);
  MultiHeadAttention<double> params("msa", 8, 2, init);
  const auto x = random_tensor<double>({1, 16, 8}, 20);
  Tensor<double> xp(x.shape());
  auto perm = [](std::size_t t) { return (t * 5 + 3) % 16; };
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t c = 0; c < 8; ++c) xp.at({0, t, c}) = x.at({0, perm(t), c});
  const auto y = spatial_msa(cst(x), params).value();
  const auto yp = spatial_msa(cst(xp), params).value();
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp.at({0, t, c}), y.at({0, perm(t), c}), 1e-12);
}

TEST(SpatialMsa, HeadsMustDivideWidth) {
  Initializer init(21);
  EXPECT_THROW(MultiHeadAttention<double>("msa", 6, 4, init), ConfigError);
  MultiHeadAttention<double> params("msa", 6, 3, init);
  params.heads = 4;
  EXPECT_THROW(spatial_msa(cst(Tensor<double>(Shape{1, 16, 6})), params), ConfigError);
}

TEST(Scem, ZeroBranchesReduceToIdentity) {
  Initializer init(22);
  ScemParams<double> params("scem", 8, 4, 4, 2, init);
  params.zero_branches();
  const auto x = random_tensor<double>({1, 8, 8, 8}, 23);
  EXPECT_LE(max_abs_diff(scem_forward(cst(x), params).value(), x), 1e-15);
}

TEST(Scem, PreservesShape) {
  Initializer init(24);
  ScemParams<float> params("scem", 16, 4, 4, 2, init);
  const auto x = random_tensor<float>({1, 16, 24, 24}, 25);
  EXPECT_EQ(scem_forward(Var<float>::constant(x), params).shape(), x.shape());
  EXPECT_THROW(scem_forward(Var<float>::constant(Tensor<float>(Shape{1, 16, 10, 8})), params), DimensionError);
}

TEST(Tfam, ZeroPostConvReturnsCurrentFrame) {
  Initializer init(26);
  TfamParams<double> params("tfam", AggregationMode::tfam, 8, 4, 4, 2, init);
  params.post.zero();
  const auto cur = random_tensor<double>({1, 8, 8, 8}, 27);
  const auto y = tfam_forward(cst(random_tensor<double>({1, 8, 8, 8}, 28)), cst(cur),
                              cst(random_tensor<double>({1, 8, 8, 8}, 29)), params);
  EXPECT_EQ(y.value(), cur);
}

TEST(Tfam, MeanMode) {
  Initializer init(30);
  TfamParams<double> params("tfam", AggregationMode::mean, 4, 4, 4, 2, init);
  const auto f = random_tensor<double>({1, 4, 8, 8}, 31);
  EXPECT_LE(max_abs_diff(tfam_forward(cst(f), cst(f), cst(f), params).value(), f), 1e-15);
  const auto y = tfam_forward(cst(Tensor<double>(Shape{1, 4, 8, 8}, 0.0)), cst(Tensor<double>(Shape{1, 4, 8, 8}, 3.0)),
                              cst(Tensor<double>(Shape{1, 4, 8, 8}, 6.0)), params);
  for (double v : y.value().values()) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Tfam, ConvModeAndShapes) {
  Initializer init(32);
  for (auto mode : {AggregationMode::tfam, AggregationMode::conv}) {
    TfamParams<float> params("tfam", mode, 8, 4, 4, 2, init);
    const auto f = Var<float>::constant(random_tensor<float>({2, 8, 16, 16}, 33));
    EXPECT_EQ(tfam_forward(f, f, f, params).shape(), f.shape());
    EXPECT_THROW(tfam_forward(f, f, Var<float>::constant(Tensor<float>(Shape{2, 8, 16, 8})), params),
                 DimensionError);
  }
}

TEST(Tfam, ModeNamesRoundTrip) {
  for (auto mode : {AggregationMode::tfam, AggregationMode::mean, AggregationMode::conv}) {
    EXPECT_EQ(parse_aggregation_mode(to_string(mode)), mode);
  }
  EXPECT_THROW(parse_aggregation_mode("max"), ConfigError);
}
