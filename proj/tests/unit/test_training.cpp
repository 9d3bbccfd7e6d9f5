#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "dsct/checkpoint.hpp"
#include "dsct/errors.hpp"
#include "dsct/training.hpp"
#include "helpers.hpp"

using namespace dsct;
using testing_support::random_tensor;
using testing_support::synthetic_sequence;
using testing_support::TempDir;
using testing_support::tiny_config;

namespace {

std::vector<FrameSequence> tiny_dataset() {
  return {synthetic_sequence(3, 24, 24, 1), synthetic_sequence(2, 24, 24, 2)};
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr_decay_epochs = {2};
  cfg.batch_size = 2;
  cfg.crop_size = 16;
  cfg.seed = 11;
  return cfg;
}

ModelConfig small_model() {
  ModelConfig cfg = tiny_config();
  cfg.base_channels = 4;
  return cfg;
}

std::vector<double> run_losses(TrainingState& state, const TrainConfig& cfg, const TrainOptions& base = {}) {
  std::vector<double> losses;
  TrainOptions opts = base;
  opts.on_step = [&](const StepLog& log) { losses.push_back(log.loss); };
  train(state, tiny_dataset(), cfg, opts);
  return losses;
}

}  // namespace

TEST(LrSchedule, DefaultScheduleExactValues) {
  const TrainConfig cfg;
  for (std::size_t e : {1, 25, 49}) EXPECT_EQ(lr_schedule(e, cfg), 1e-3) << e;
  for (std::size_t e : {50, 55, 59}) EXPECT_EQ(lr_schedule(e, cfg), 1e-4) << e;
  for (std::size_t e : {60, 70, 79}) EXPECT_EQ(lr_schedule(e, cfg), 1e-5) << e;
  for (std::size_t e : {80, 85, 100}) EXPECT_EQ(lr_schedule(e, cfg), 1e-6) << e;
}

TEST(LrSchedule, NonIncreasingWithThreeDrops) {
  const TrainConfig cfg;
  int drops = 0;
  for (std::size_t e = 2; e <= cfg.epochs; ++e) {
    const double prev = lr_schedule(e - 1, cfg), cur = lr_schedule(e, cfg);
    EXPECT_LE(cur, prev);
    if (cur < prev) {
      ++drops;
      EXPECT_NEAR(prev / cur, 10.0, 1e-12);
    }
  }
  EXPECT_EQ(drops, 3);
}

TEST(Adam, FirstIterateClosedForm) {
  Parameter<double> p("p", Tensor<double>::scalar(0.0));
  p.grad = Tensor<double>::scalar(2.0);
  ParameterRefs<double> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  adam_step(params, state, 1e-3);
  EXPECT_EQ(state.t, 1u);
  // m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps).
  EXPECT_NEAR(p.value.item(), -1e-3 * 2.0 / (2.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p.value.item(), -9.99999995e-4, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Parameter<double> p("p", random_tensor<double>({4}, 1));
  const auto before = p.value;
  ParameterRefs<double> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  adam_step(params, state, 1e-3);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepBoundedByLearningRate) {
  Parameter<double> p("p", random_tensor<double>({64}, 2));
  p.grad = random_tensor<double>({64}, 3, -100, 100);
  p.grad[0] = 1e-12;
  const auto before = p.value;
  ParameterRefs<double> params{&p};
  auto state = AdamState<double>::zeros_like(params);
  adam_step(params, state, 1e-3);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_LE(std::abs(p.value[i] - before[i]), 1e-3 * (1 + 1e-12));
}

TEST(Adam, DefaultsFromConfig) {
  const auto h = AdamHyper::from(TrainConfig{});
  EXPECT_EQ(h.beta1, 0.9);
  EXPECT_EQ(h.beta2, 0.999);
  EXPECT_EQ(h.eps, 1e-8);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  TrainingState state = TrainingState::fresh(small_model(), tiny_train());
  Checkpoint ckpt = to_checkpoint(state, tiny_train());
  ckpt.tensors.push_back({"extra/f64", random_tensor<double>({2, 3}, 4)});
  const auto bytes = serialize_checkpoint(ckpt);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  ASSERT_EQ(back.tensors.size(), ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, ckpt.tensors[i].name);
    EXPECT_TRUE(back.tensors[i].tensor == ckpt.tensors[i].tensor) << ckpt.tensors[i].name;
  }
  EXPECT_EQ(back.get<double>("extra/f64"), random_tensor<double>({2, 3}, 4));
  EXPECT_THROW(back.get<float>("extra/f64"), CorruptCheckpointError);
  EXPECT_THROW(back.get<float>("nope"), CorruptCheckpointError);

  TempDir dir("ckpt");
  save_checkpoint(dir.path() / "a.dsct", ckpt);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir.path() / "a.dsct")), bytes);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "a.dsct.tmp"));
}

TEST(Checkpoint, CorruptionDetected) {
  Checkpoint ckpt;
  ckpt.config = {{"k", "v"}};
  ckpt.tensors.push_back({"w", random_tensor<float>({3, 3}, 5)});
  const auto bytes = serialize_checkpoint(ckpt);
  for (std::size_t cut = 1; cut <= bytes.size(); ++cut) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(deserialize_checkpoint(truncated), CorruptCheckpointError) << cut;
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CorruptCheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_THROW(deserialize_checkpoint(bad_version), CorruptCheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(trailing), CorruptCheckpointError);

  TempDir dir("trunc");
  std::ofstream(dir.path() / "t.dsct", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() - 1));
  EXPECT_THROW(load_checkpoint(dir.path() / "t.dsct"), CorruptCheckpointError);
}

TEST(Checkpoint, LayoutHeader) {
  Checkpoint ckpt;
  const auto bytes = serialize_checkpoint(ckpt);
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DSCT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(EpochOrder, SeededPermutation) {
  const auto data = tiny_dataset();
  const auto cfg = tiny_train();
  const auto a = epoch_order(data, 1, cfg);
  ASSERT_EQ(a.size(), 5u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& r : a) seen.insert({r.video, r.frame});
  EXPECT_EQ(seen.size(), 5u);
  const auto b = epoch_order(data, 1, cfg);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i].video * 10 + a[i].frame, b[i].video * 10 + b[i].frame);
  bool differs = false;
  for (std::size_t e = 2; e < 8 && !differs; ++e) {
    const auto c = epoch_order(data, e, cfg);
    for (std::size_t i = 0; i < 5; ++i) differs |= c[i].video != a[i].video || c[i].frame != a[i].frame;
  }
  EXPECT_TRUE(differs);
}

TEST(Training, StepLogFormat) {
  EXPECT_EQ(format_step_log({3, 17, 0.25, 1e-3}), "3 17 0.25 0.001");
}

TEST(Training, ZeroHeadLossIsHalfTargetEnergy) {
  TrainConfig cfg = tiny_train();
  TrainingState state = TrainingState::fresh(small_model(), cfg);
  state.model.fine->decoder.smooth2.zero();
  const auto data = tiny_dataset();
  std::vector<SampleTriple> batch{synthesize_sample(data[0], 0, 1, 1, cfg), synthesize_sample(data[1], 1, 0, 1, cfg)};
  double energy = 0;
  for (const auto& s : batch)
    for (float v : s.target.values()) energy += static_cast<double>(v) * v;
  const double loss = training_step(state, batch, 1e-3, cfg);
  EXPECT_NEAR(loss, energy / 4.0, 1e-6 * energy);
  EXPECT_EQ(state.cursor.step, 0u);  // cursor belongs to the loop
  EXPECT_EQ(state.adam.t, 1u);
}

TEST(Training, SeededRunsAreBitIdentical) {
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 5;
  TrainingState a = TrainingState::fresh(small_model(), cfg);
  TrainingState b = TrainingState::fresh(small_model(), cfg);
  const auto la = run_losses(a, cfg);
  const auto lb = run_losses(b, cfg);
  ASSERT_EQ(la.size(), 5u);
  EXPECT_EQ(la, lb);
  for (double l : la) EXPECT_TRUE(std::isfinite(l));
  cfg.seed = 12;
  TrainingState c = TrainingState::fresh(small_model(), cfg);
  EXPECT_NE(run_losses(c, cfg), la);
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 7;  // 3 batches per epoch, so this crosses an epoch and a decay
  TrainingState whole = TrainingState::fresh(small_model(), cfg);
  const auto reference = run_losses(whole, cfg);
  ASSERT_EQ(reference.size(), 7u);

  TempDir dir("resume");
  const auto path = dir.path() / "ckpt.dsct";
  TrainingState first = TrainingState::fresh(small_model(), cfg);
  TrainOptions stop;
  stop.stop_after_step = 4;
  stop.checkpoint_path = path;
  auto losses = run_losses(first, cfg, stop);
  ASSERT_EQ(losses.size(), 4u);

  TrainConfig stored;
  TrainingState resumed = training_state_from(load_checkpoint(path), &stored);
  EXPECT_EQ(resumed.cursor, (TrainCursor{2, 1, 4}));
  EXPECT_EQ(stored.seed, cfg.seed);
  const auto rest = run_losses(resumed, stored);
  losses.insert(losses.end(), rest.begin(), rest.end());
  EXPECT_EQ(losses, reference);
  EXPECT_EQ(serialize_checkpoint(to_checkpoint(resumed, cfg)), serialize_checkpoint(to_checkpoint(whole, cfg)));
}

TEST(Training, TrainLoopWritesLogAndCheckpoint) {
  TempDir dir("loop");
  testing_support::write_sequence(synthetic_sequence(3, 24, 24, 1), dir.path() / "v0", ".ppm");
  std::ofstream(dir.path() / "list.txt") << "v0\n";
  TrainConfig cfg = tiny_train();
  cfg.epochs = 2;
  cfg.lr_decay_epochs = {2};
  const auto ckpt = train_loop(dir.path() / "list.txt", cfg, small_model(), dir.path() / "out");
  EXPECT_EQ(ckpt.setting("state.step"), "4");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "out" / "checkpoint.dsct"));
  std::ifstream log(dir.path() / "out" / "train.log");
  std::vector<std::string> lines;
  for (std::string line; std::getline(log, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].substr(0, 4), "1 1 ");
  EXPECT_EQ(lines[3].substr(0, 4), "2 4 ");
  EXPECT_EQ(std::stod(lines[3].substr(lines[3].rfind(' ') + 1)), 1e-4) << lines[3];
  // A finished run resumes to completion without further steps.
  train_loop(dir.path() / "list.txt", cfg, small_model(), dir.path() / "out");
  std::ifstream again(dir.path() / "out" / "train.log");
  std::size_t count = 0;
  for (std::string line; std::getline(again, line);) ++count;
  EXPECT_EQ(count, 4u);
}

TEST(Training, ModelFromCheckpointMatches) {
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 2;
  TrainingState state = TrainingState::fresh(small_model(), cfg);
  run_losses(state, cfg);
  auto restored = model_from(to_checkpoint(state, cfg));
  const auto x = Var<float>::constant(random_tensor<float>({1, 3, 32, 32}, 6, 0, 1));
  NoGradGuard guard;
  EXPECT_EQ(dsct_forward<float>({x, x, x}, restored, Mode::eval).final().value(),
            dsct_forward<float>({x, x, x}, state.model, Mode::eval).final().value());
}
