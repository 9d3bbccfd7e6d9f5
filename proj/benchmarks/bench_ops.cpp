#include <benchmark/benchmark.h>

#include "dsct/attention.hpp"
#include "dsct/model.hpp"
#include "dsct/ops.hpp"
#include "dsct/rng.hpp"

using namespace dsct;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  RngStream rng(seed, StreamPurpose::test, {0xbe7cu, 0, 0});
  Tensor<float> t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void report_flops(benchmark::State& state, std::uint64_t flops_per_iteration) {
  state.counters["FLOP/s"] = benchmark::Counter(static_cast<double>(flops_per_iteration),
                                                benchmark::Counter::kIsIterationInvariantRate);
}

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const auto x = Var<float>::constant(noise({1, c, size, size}, 1));
  const auto w = Var<float>::constant(noise({c, c, 3, 3}, 2));
  const auto b = Var<float>::constant(noise({c}, 3));
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, b, 1, {PadMode::zero, 1}));
  }
  report_flops(state, conv_flops(c, c, 3, size, size));
}
BENCHMARK(BM_Conv3x3)->Args({32, 96})->Args({64, 48})->Args({128, 24})->Unit(benchmark::kMillisecond);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  Parameter<float> w("w", noise({c, c, 3, 3}, 2));
  Parameter<float> b("b", noise({c}, 3));
  const auto x = noise({1, c, size, size}, 1);
  for (auto _ : state) {
    auto y = conv2d(Var<float>::constant(x), Var<float>::parameter(w), Var<float>::parameter(b), 1,
                    {PadMode::zero, 1});
    backward(sum(y));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({32, 96})->Unit(benchmark::kMillisecond);

static void BM_SpatialMsa(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Initializer init(4);
  MultiHeadAttention<float> params("msa", c, 4, init);
  const auto tokens = Var<float>::constant(noise({576, 16, c}, 5));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(spatial_msa(tokens, params));
}
BENCHMARK(BM_SpatialMsa)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ChannelAttention(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Initializer init(6);
  ChannelAttention<float> params("ca", 16, 16, init);
  const auto tokens = Var<float>::constant(noise({576, 16, c}, 7));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(channel_self_attention(tokens, params));
}
BENCHMARK(BM_ChannelAttention)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Softmax(benchmark::State& state) {
  const auto x = Var<float>::constant(noise({2304, 16, 16}, 8));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(softmax(x, 2));
}
BENCHMARK(BM_Softmax)->Unit(benchmark::kMicrosecond);

static void BM_ModelForward(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  auto model = DsctModel<float>::create(ModelConfig{}, 9);
  const auto frame = Var<float>::constant(noise({1, 3, size, size}, 10));
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsct_forward<float>({frame, frame, frame}, model, Mode::eval));
  }
  report_flops(state, flops_estimate(ModelConfig{}, size, size));
}
BENCHMARK(BM_ModelForward)->Arg(96)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
