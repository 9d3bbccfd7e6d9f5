#include "dsct/gradient_suite.hpp"

#include "dsct/attention.hpp"
#include "dsct/model.hpp"

namespace dsct {

namespace {

using P = Parameter<double>;
using V = Var<double>;

class CaseBuilder {
 public:
  explicit CaseBuilder(std::uint64_t seed) : seed_(seed), rng_(seed, StreamPurpose::test, {1, 0, 0}) {}

  // Random input in [lo, hi); values keep away from zero when `lo` > 0 and a
  // random sign is applied, which avoids ReLU kinks.
  P input(const std::string& name, Shape shape, double lo = -1.0, double hi = 1.0,
          bool random_sign = false) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.values()) {
      v = rng_.uniform(lo, hi);
      if (random_sign && rng_.below(2) == 0) v = -v;
    }
    return P(name, std::move(t));
  }

  std::uint64_t projection_seed() { return seed_ + 1000 + counter_++; }

 private:
  std::uint64_t seed_;
  RngStream rng_;
  std::uint64_t counter_ = 0;
};

std::vector<P*> refs(std::initializer_list<P*> ps) { return ps; }

}  // namespace

std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientCase> cases;
  CaseBuilder b(options.seed);
  auto run = [&](const std::string& name, double tol, const std::function<V()>& loss,
                 const std::vector<P*>& targets, GradCheckOptions gc = {}) {
    GradientCase c{name, tol, grad_check(loss, targets, gc)};
    if (options.on_case) options.on_case(c);
    cases.push_back(std::move(c));
  };
  const auto proj = [](const V& v, std::uint64_t seed) { return random_projection(v, seed); };

  {
    P x = b.input("x", {2, 3, 5}), y = b.input("y", {2, 3, 5});
    const auto s = b.projection_seed();
    run("add_sub_mul", 1e-5,
        [&] {
          const V a = V::parameter(x), c = V::parameter(y);
          return proj(mul(sub(add(a, c), scale(c, 0.5)), a), s);
        },
        refs({&x, &y}));
  }
  {
    P x = b.input("x", {3, 4, 5}, 0.05, 1.0, true);
    const auto s = b.projection_seed();
    run("relu", 1e-5, [&] { return proj(relu(V::parameter(x)), s); }, refs({&x}));
  }
  {
    P x = b.input("x", {3, 4}), w = b.input("w", {4, 5}), bias = b.input("b", {5});
    const auto s = b.projection_seed();
    run("linear", 1e-5,
        [&] { return proj(linear(V::parameter(x), V::parameter(w), V::parameter(bias)), s); },
        refs({&x, &w, &bias}));
  }
  for (const bool transpose : {false, true}) {
    P a = b.input("a", {2, 3, 4});
    P m = b.input("b", transpose ? Shape{2, 5, 4} : Shape{2, 4, 5});
    const auto s = b.projection_seed();
    run(transpose ? "matmul_transposed" : "matmul", 1e-5,
        [&] { return proj(matmul(V::parameter(a), V::parameter(m), transpose), s); },
        refs({&a, &m}));
  }
  struct ConvCase {
    const char* name;
    std::size_t stride, kernel;
    PadMode mode;
  };
  for (const ConvCase cc : {ConvCase{"conv2d_3x3", 1, 3, PadMode::zero},
                            ConvCase{"conv2d_stride2", 2, 3, PadMode::zero},
                            ConvCase{"conv2d_reflect", 1, 3, PadMode::reflect},
                            ConvCase{"conv2d_1x1", 1, 1, PadMode::zero}}) {
    P x = b.input("x", {2, 3, 6, 5}), w = b.input("w", {4, 3, cc.kernel, cc.kernel});
    P bias = b.input("b", {4});
    const auto s = b.projection_seed();
    const Padding pad{cc.mode, cc.kernel / 2};
    run(cc.name, 1e-5,
        [&] {
          return proj(conv2d(V::parameter(x), V::parameter(w), V::parameter(bias), cc.stride, pad), s);
        },
        refs({&x, &w, &bias}));
  }
  for (std::size_t axis : {1u, 2u}) {
    P x = b.input("x", {2, 4, 5}, -2.0, 2.0);
    const auto s = b.projection_seed();
    run("softmax_axis" + std::to_string(axis), 1e-5,
        [&] { return proj(softmax(V::parameter(x), axis), s); }, refs({&x}));
  }
  {
    P x = b.input("x", {3, 4, 6}, -2.0, 2.0), g = b.input("gamma", {6}), be = b.input("beta", {6});
    const auto s = b.projection_seed();
    run("layer_norm", 1e-5,
        [&] { return proj(layer_norm(V::parameter(x), V::parameter(g), V::parameter(be), 1), s); },
        refs({&x, &g, &be}));
  }
  for (const Mode mode : {Mode::train, Mode::eval}) {
    P x = b.input("x", {3, 2, 3, 4}, -2.0, 2.0), g = b.input("gamma", {2}), be = b.input("beta", {2});
    BatchNormState<double> state(2);
    state.reset_running_stats();
    state.running_mean = Tensor<double>(Shape{2}, {0.1, -0.2});
    state.running_var = Tensor<double>(Shape{2}, {0.5, 1.5});
    const auto s = b.projection_seed();
    run(mode == Mode::train ? "batch_norm_train" : "batch_norm_eval", 1e-3,
        [&] {
          BatchNormState<double> scratch = state;
          return proj(batch_norm(V::parameter(x), V::parameter(g), V::parameter(be), scratch, mode), s);
        },
        refs({&x, &g, &be}));
  }
  {
    P x = b.input("x", {2, 3, 4}), y = b.input("y", {2, 1, 4});
    const auto s = b.projection_seed();
    run("reshape_permute_concat_slice", 1e-5,
        [&] {
          const V c = concat<double>({V::parameter(x), V::parameter(y)}, 1);
          const V p = permute(reshape(c, Shape{2, 4, 2, 2}), {0, 3, 1, 2});
          const auto parts = split(slice(p, 2, 1, 3), 3, {1, 1});
          return add(proj(parts[0], s), proj(mul(parts[1], parts[1]), s + 1));
        },
        refs({&x, &y}));
  }
  {
    P x = b.input("x", {2, 8, 3, 2});
    const auto s = b.projection_seed();
    run("pixel_shuffle_unshuffle", 1e-5,
        [&] {
          const V up = pixel_shuffle(V::parameter(x), 2);
          return add(proj(up, s), proj(pixel_unshuffle(mul(up, up), 2), s + 1));
        },
        refs({&x}));
  }
  {
    P x = b.input("x", {1, 2, 5, 6});
    const auto s = b.projection_seed();
    run("pad_reflect_crop", 1e-5,
        [&] { return proj(crop(pad_reflect(V::parameter(x), 1, 3, 2, 4), 1, 0, 8, 9), s); },
        refs({&x}));
  }
  {
    P x = b.input("x", {2, 3, 2, 2}), y = b.input("y", {2, 3, 2, 2}), z = b.input("z", {2, 3, 2, 2});
    const auto s = b.projection_seed();
    run("mean_of_sum", 1e-5,
        [&] {
          return add(proj(mean_of<double>({V::parameter(x), V::parameter(y), V::parameter(z)}), s),
                     sum(V::parameter(x)));
        },
        refs({&x, &y, &z}));
  }
  {
    P pred = b.input("pred", {2, 3, 2, 2});
    const Tensor<double> target = b.input("target", {2, 3, 2, 2}).value;
    run("l2_loss", 1e-6, [&] { return l2_loss(V::parameter(pred), target); }, refs({&pred}));
  }

  Initializer init(options.seed + 7);
  {
    ChannelAttention<double> ca("channel", 4, 4, init);
    P x = b.input("x", {3, 4, 5});
    ParameterRefs<double> targets{&x};
    ca.collect(targets);
    const auto s = b.projection_seed();
    run("channel_self_attention", 1e-3,
        [&] { return proj(channel_self_attention(V::parameter(x), ca), s); }, targets);
  }
  {
    MultiHeadAttention<double> msa("spatial", 8, 2, init);
    P x = b.input("x", {2, 4, 8});
    ParameterRefs<double> targets{&x};
    msa.collect(targets);
    const auto s = b.projection_seed();
    run("spatial_msa", 1e-3, [&] { return proj(spatial_msa(V::parameter(x), msa), s); }, targets);
  }
  {
    ScemParams<double> scem("scem", 4, 2, 2, 2, init);
    P x = b.input("x", {1, 4, 4, 4});
    ParameterRefs<double> targets{&x};
    scem.collect(targets);
    const auto s = b.projection_seed();
    run("scem", 1e-3, [&] { return proj(scem_forward(V::parameter(x), scem), s); }, targets);
  }
  for (const AggregationMode mode : {AggregationMode::tfam, AggregationMode::conv, AggregationMode::mean}) {
    TfamParams<double> agg("agg", mode, 4, 2, 2, 2, init);
    P f0 = b.input("prev", {1, 4, 4, 4}), f1 = b.input("cur", {1, 4, 4, 4}), f2 = b.input("next", {1, 4, 4, 4});
    ParameterRefs<double> targets{&f0, &f1, &f2};
    agg.collect(targets);
    const auto s = b.projection_seed();
    run("aggregation_" + to_string(mode), 1e-3,
        [&] {
          return proj(tfam_forward(V::parameter(f0), V::parameter(f1), V::parameter(f2), agg), s);
        },
        targets);
  }
  {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.scale_channels = {8, 8};
    cfg.patch_size = 2;
    cfg.heads = 2;
    cfg.pad_multiple = 8;
    Stem<double> stem;
    stem.conv1 = Conv2d<double>("stem.conv1", 3, 4, 3, 1, init, false);
    stem.bn1 = BatchNorm2d<double>("stem.bn1", 4);
    stem.conv2 = Conv2d<double>("stem.conv2", 4, 4, 3, 1, init, false);
    stem.bn2 = BatchNorm2d<double>("stem.bn2", 4);
    EncoderStage<double> stage;
    stage.down = Conv2d<double>("stage.down", 4, 8, 3, 2, init);
    stage.scem = ScemParams<double>("stage.scem", 8, 2, 2, 2, init);
    stage.conv1 = Conv2d<double>("stage.conv1", 8, 8, 3, 1, init);
    stage.conv2 = Conv2d<double>("stage.conv2", 8, 8, 3, 1, init);
    P x = b.input("x", {2, 3, 8, 8});
    ParameterRefs<double> targets{&x};
    stem.conv1.collect(targets);
    stem.bn1.collect(targets);
    stem.conv2.collect(targets);
    stem.bn2.collect(targets);
    stage.down.collect(targets);
    stage.scem.collect(targets);
    stage.conv1.collect(targets);
    stage.conv2.collect(targets);
    const auto s = b.projection_seed();
    run("stem_and_encoder_stage", 1e-3,
        [&] {
          return proj(encoder_stage(initial_features(V::parameter(x), stem, Mode::train), stage), s);
        },
        targets);
  }

  if (options.include_full_model) {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.scale_channels = {8, 16};
    cfg.heads = 4;
    DsctModel<double> model = DsctModel<double>::create(cfg, options.seed);
    P prev = b.input("prev", {1, 3, 32, 32}, 0.0, 1.0);
    P cur = b.input("cur", {1, 3, 32, 32}, 0.0, 1.0);
    P next = b.input("next", {1, 3, 32, 32}, 0.0, 1.0);
    const Tensor<double> clean = b.input("clean", {1, 3, 32, 32}, 0.0, 1.0).value;
    ParameterRefs<double> targets{&prev, &cur, &next};
    for (auto* p : model.parameters()) targets.push_back(p);
    GradCheckOptions gc;
    gc.max_coords_per_target = options.full_model_coords;
    gc.seed = options.seed;
    // The loss here is O(100) while many gradients are O(1e-6), so a 1e-4
    // step leaves the difference quotient dominated by rounding. The
    // fourth-order stencil keeps truncation small at the larger step.
    gc.eps = 1e-3;
    run("full_model", 1e-3,
        [&] {
          const FrameTriple<double> t{V::parameter(prev), V::parameter(cur), V::parameter(next)};
          return l2_loss(dsct_forward(t, model, Mode::train).final(), clean);
        },
        targets, gc);
  }
  return cases;
}

}  // namespace dsct
