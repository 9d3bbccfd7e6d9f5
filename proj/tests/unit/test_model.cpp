#include <gtest/gtest.h>

#include "dsct/errors.hpp"
#include "dsct/model.hpp"
#include "helpers.hpp"

using namespace dsct;
using testing_support::random_tensor;
using testing_support::tiny_config;

namespace {

FrameTriple<float> random_triple(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  return {Var<float>::constant(random_tensor<float>({n, 3, h, w}, seed, 0, 1)),
          Var<float>::constant(random_tensor<float>({n, 3, h, w}, seed + 1, 0, 1)),
          Var<float>::constant(random_tensor<float>({n, 3, h, w}, seed + 2, 0, 1))};
}

DsctOutput<float> run(DsctModel<float>& model, const FrameTriple<float>& triple) {
  NoGradGuard guard;
  return dsct_forward(triple, model, Mode::eval);
}

void perturb(Parameter<float>& p, std::uint64_t seed) {
  p.value = random_tensor<float>(p.value.shape(), seed);
}

}  // namespace

TEST(Model, ShapePreservedForAllSizes) {
  auto model = DsctModel<float>::create(tiny_config(), 1);
  for (std::size_t s : {32, 96, 100, 160}) {
    const auto out = run(model, random_triple(1, s, s, 2));
    EXPECT_EQ(out.coarse.shape(), (Shape{1, 3, s, s}));
    EXPECT_EQ(out.fine.shape(), (Shape{1, 3, s, s}));
  }
  const auto rect = run(model, random_triple(2, 40, 72, 3));
  EXPECT_EQ(rect.final().shape(), (Shape{2, 3, 40, 72}));
}

TEST(Model, PadsToMultipleOfSixteen) {
  EXPECT_EQ(padded_extent(100, 16), 112u);
  EXPECT_EQ(padded_extent(96, 16), 96u);
  const auto x = Var<float>::constant(random_tensor<float>({1, 3, 100, 100}, 4));
  const auto p = pad_to_multiple(x, 16);
  EXPECT_EQ(p.shape(), (Shape{1, 3, 112, 112}));
  EXPECT_EQ(crop(p, 0, 0, 100, 100).value(), x.value());
}

TEST(Model, StemOfZeroInputIsZero) {
  auto model = DsctModel<float>::create(tiny_config(), 5);
  const auto zero = Var<float>::constant(Tensor<float>(Shape{2, 3, 16, 16}));
  for (Mode mode : {Mode::train, Mode::eval}) {
    const auto y = initial_features(zero, model.fine->encoder.stem, mode);
    EXPECT_EQ(y.shape(), (Shape{2, 8, 16, 16}));
    for (float v : y.value().values()) ASSERT_EQ(v, 0.0f);
  }
}

TEST(Model, EncoderStageHalvesExtent) {
  ModelConfig cfg = tiny_config();
  cfg.base_channels = 16;
  cfg.scale_channels = {32, 64};
  auto model = DsctModel<float>::create(cfg, 6);
  const auto x = Var<float>::constant(random_tensor<float>({1, 16, 32, 32}, 7));
  const auto& stage = model.fine->encoder.stages[0];
  const auto y = encoder_stage(x, stage);
  EXPECT_EQ(y.shape(), (Shape{1, 32, 16, 16}));
  EXPECT_EQ(encoder_stage(x, stage).value(), y.value());
  EXPECT_THROW(encoder_stage(Var<float>::constant(Tensor<float>(Shape{1, 16, 20, 20})), stage),
               DimensionError);
}

TEST(Model, EncoderStageBranchSum) {
  auto model = DsctModel<double>::create(tiny_config(), 8);
  auto stage = model.fine->encoder.stages[0];
  const auto x = Var<double>::constant(random_tensor<double>({1, 8, 16, 16}, 9));
  const auto down = stage.down(x);
  const auto conv = stage.conv2(relu(stage.conv1(down)));
  // A zeroed SCEM is its residual path, so the stage sums the downsampled
  // input with the conv branch.
  stage.scem.zero_branches();
  EXPECT_LE(max_abs_diff(encoder_stage(x, stage).value(), add(down, conv).value()), 1e-14);
  stage.scem_enabled = false;
  EXPECT_EQ(encoder_stage(x, stage).value(), conv.value());
}

TEST(Model, DisablingScemUsesConvBranchOnly) {
  ModelConfig cfg = tiny_config();
  cfg.enable_scem = false;
  auto model = DsctModel<float>::create(cfg, 10);
  EXPECT_FALSE(model.fine->encoder.stages[0].scem_enabled);
  EXPECT_LT(model.parameter_count(), DsctModel<float>::create(tiny_config(), 10).parameter_count());
  EXPECT_EQ(run(model, random_triple(1, 32, 32, 11)).final().shape(), (Shape{1, 3, 32, 32}));
}

TEST(Model, CoarseOnlyMode) {
  ModelConfig cfg = tiny_config();
  cfg.stage_mode = StageMode::coarse;
  auto model = DsctModel<float>::create(cfg, 12);
  EXPECT_FALSE(model.fine.has_value());
  const auto triple = random_triple(1, 32, 32, 13);
  const auto out = run(model, triple);
  EXPECT_FALSE(out.fine.defined());
  EXPECT_EQ(out.final().value(), out.coarse.value());
  NoGradGuard guard;
  EXPECT_EQ(out.final().value(), coarse_forward(triple, model, Mode::eval).image.value());
}

TEST(Model, FineOnlyModeDenoisesMiddleFrame) {
  ModelConfig cfg = tiny_config();
  cfg.stage_mode = StageMode::fine;
  auto model = DsctModel<float>::create(cfg, 14);
  EXPECT_FALSE(model.coarse.has_value());
  const auto triple = random_triple(1, 32, 32, 15);
  const auto out = run(model, triple);
  EXPECT_FALSE(out.coarse.defined());
  NoGradGuard guard;
  EXPECT_EQ(out.final().value(), fine_forward<float>(triple.cur, nullptr, model, Mode::eval).value());
  // Neighbours are ignored.
  FrameTriple<float> other = triple;
  other.prev = Var<float>::constant(Tensor<float>(Shape{1, 3, 32, 32}));
  EXPECT_EQ(dsct_forward(other, model, Mode::eval).final().value(), out.final().value());
}

TEST(Model, CrossStageSkipShapeMismatch) {
  auto model = DsctModel<float>::create(tiny_config(), 16);
  CrossStageSkips<float> skips{Var<float>::constant(Tensor<float>(Shape{1, 8, 8, 8})),
                               Var<float>::constant(Tensor<float>(Shape{1, 16, 8, 8}))};
  const auto image = Var<float>::constant(random_tensor<float>({1, 3, 32, 32}, 17));
  NoGradGuard guard;
  EXPECT_THROW(fine_forward(image, &skips, model, Mode::eval), DimensionError);
  skips.half = Var<float>::constant(Tensor<float>(Shape{1, 8, 16, 16}));
  EXPECT_NO_THROW(fine_forward(image, &skips, model, Mode::eval));
}

TEST(Model, ZeroedAttentionLeavesOnlyConvPathway) {
  auto model = DsctModel<float>::create(tiny_config(), 18);
  zero_attention_branches(model);
  const auto triple = random_triple(1, 32, 32, 19);
  const auto before = run(model, triple);
  // With value/mix/MLP outputs and the TFAM output conv at zero, nothing
  // upstream of them inside the attention blocks can reach the output.
  std::uint64_t seed = 100;
  auto scramble_scem = [&](ScemParams<float>& s) {
    perturb(s.attn_norm.gamma, seed++);
    perturb(s.channel.query.weight, seed++);
    perturb(s.channel.key.weight, seed++);
    perturb(s.spatial.query.weight, seed++);
    perturb(s.spatial.key.weight, seed++);
    perturb(s.mlp_norm.gamma, seed++);
    perturb(s.mlp.expand.weight, seed++);
  };
  for (auto& enc : model.coarse->encoders)
    for (auto& st : enc.stages) scramble_scem(st.scem);
  for (auto& st : model.fine->encoder.stages) scramble_scem(st.scem);
  for (auto& agg : model.coarse->aggregators) {
    perturb(agg.fuse.weight, seed++);
    perturb(agg.attention.query.weight, seed++);
    perturb(agg.mlp.expand.weight, seed++);
  }
  const auto after = run(model, triple);
  EXPECT_EQ(after.coarse.value(), before.coarse.value());
  EXPECT_EQ(after.fine.value(), before.fine.value());
}

TEST(Model, ZeroFineHeadGivesZeroOutput) {
  auto model = DsctModel<float>::create(tiny_config(), 20);
  model.fine->decoder.smooth2.zero();
  const auto out = run(model, random_triple(1, 32, 32, 21));
  for (float v : out.fine.value().values()) ASSERT_EQ(v, 0.0f);
}

TEST(Model, SkipTogglesChangeOutputsNotShapes) {
  const auto triple = random_triple(1, 32, 32, 22);
  auto base_model = DsctModel<float>::create(tiny_config(), 23);
  const auto base = run(base_model, triple).fine.value();
  for (int which = 0; which < 3; ++which) {
    ModelConfig cfg = tiny_config();
    if (which == 0) cfg.enable_fskip = false;
    if (which == 1) cfg.enable_cfskip = false;
    if (which == 2) cfg.enable_tfam_skip = false;
    auto model = DsctModel<float>::create(cfg, 23);
    const auto out = run(model, triple).fine.value();
    EXPECT_EQ(out.shape(), base.shape());
    EXPECT_GT(max_abs_diff(out, base), 1e-6f) << "toggle " << which;
  }
}

TEST(Model, ForwardIsDeterministic) {
  const auto triple = random_triple(2, 48, 32, 24);
  auto a = DsctModel<float>::create(tiny_config(), 25);
  auto b = DsctModel<float>::create(tiny_config(), 25);
  auto c = DsctModel<float>::create(tiny_config(), 26);
  const auto ya = run(a, triple).fine.value();
  EXPECT_EQ(run(a, triple).fine.value(), ya);
  EXPECT_EQ(run(b, triple).fine.value(), ya);
  EXPECT_NE(run(c, triple).fine.value(), ya);
}

TEST(Model, UnsharedBranchesHaveThreeEncoders) {
  ModelConfig cfg = tiny_config();
  cfg.share_branch_weights = false;
  auto model = DsctModel<float>::create(cfg, 27);
  EXPECT_EQ(model.coarse->encoders.size(), 3u);
  EXPECT_EQ(run(model, random_triple(1, 32, 32, 28)).final().shape(), (Shape{1, 3, 32, 32}));
}

TEST(Model, ParameterNamesAreUnique) {
  auto model = DsctModel<float>::create(ModelConfig{}, 29);
  std::set<std::string> names;
  for (auto* p : model.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_EQ(model.buffers().size(), 4u);
}

TEST(Model, InvalidConfigRejected) {
  ModelConfig cfg = tiny_config();
  cfg.heads = 3;
  EXPECT_THROW(DsctModel<float>::create(cfg, 0), ConfigError);
  cfg = tiny_config();
  cfg.pad_multiple = 8;
  EXPECT_THROW(DsctModel<float>::create(cfg, 0), ConfigError);
}

namespace {

// Per-layer count for the default configuration at 96x96, tallied by hand
// from the architecture: 2 flops per MAC of every conv, projection and
// attention product.
std::uint64_t default_model_flops_by_hand() {
  auto conv = [](std::uint64_t cin, std::uint64_t cout, std::uint64_t k, std::uint64_t side) {
    return 2 * cin * cout * k * k * side * side;
  };
  // Per pixel-token costs with N pixels and C channels, P = 4, h = 4, m = 2.
  auto scem = [](std::uint64_t c, std::uint64_t n) {
    const std::uint64_t channel = 96 * n * c + 4 * n * c * c;  // 3 projections of 16x16, QK^T, AV
    const std::uint64_t spatial = 8 * n * c * c + 64 * n * c;  // 4 projections, QK^T, AV
    const std::uint64_t mlp = 8 * n * c * c;
    return channel + spatial + mlp;
  };
  auto tfam = [&](std::uint64_t c, std::uint64_t side) {
    const std::uint64_t n = side * side;
    return conv(3 * c, c, 3, side) + 8 * n * c * c + 64 * n * c + 8 * n * c * c + conv(c, c, 3, side);
  };
  const std::uint64_t encoder = conv(3, 32, 3, 96) + conv(32, 32, 3, 96) +  // stem
                                conv(32, 64, 3, 48) + scem(64, 48 * 48) + 2 * conv(64, 64, 3, 48) +
                                conv(64, 128, 3, 24) + scem(128, 24 * 24) + 2 * conv(128, 128, 3, 24);
  const std::uint64_t decoder = conv(128, 128, 3, 24) + conv(128, 256, 3, 24) + conv(64, 64, 3, 48) +
                                conv(64, 128, 3, 48) + conv(32, 32, 3, 96) + conv(32, 3, 3, 96);
  const std::uint64_t coarse = 3 * encoder + tfam(32, 96) + tfam(64, 48) + conv(384, 128, 1, 24) + decoder;
  return coarse + encoder + decoder;
}

}  // namespace

TEST(Flops, SingleConvClosedForm) { EXPECT_EQ(conv_flops(3, 64, 3, 96, 96), 31'850'496u); }

TEST(Flops, EstimateMatchesHandCount) {
  const double hand = static_cast<double>(default_model_flops_by_hand());
  const double est = static_cast<double>(flops_estimate(ModelConfig{}, 96, 96));
  EXPECT_LE(std::abs(est - hand) / hand, 0.01);
}

TEST(Flops, EstimateMatchesExecutedCount) {
  auto model = DsctModel<float>::create(ModelConfig{}, 30);
  const auto triple = random_triple(1, 96, 96, 31);
  reset_executed_flops();
  run(model, triple);
  EXPECT_EQ(executed_flops(), flops_estimate(ModelConfig{}, 96, 96));

  ModelConfig cfg = tiny_config();
  cfg.share_branch_weights = false;
  cfg.aggregation_mode = AggregationMode::conv;
  auto small = DsctModel<float>::create(cfg, 32);
  reset_executed_flops();
  run(small, random_triple(1, 50, 70, 33));
  EXPECT_EQ(executed_flops(), flops_estimate(cfg, 50, 70));
}

TEST(Flops, LinearInPixels) {
  const ModelConfig cfg;
  EXPECT_EQ(flops_estimate(cfg, 192, 96), 2 * flops_estimate(cfg, 96, 96));
  ModelConfig mean = cfg;
  mean.aggregation_mode = AggregationMode::mean;
  EXPECT_LT(flops_estimate(mean, 96, 96), flops_estimate(cfg, 96, 96));
}
