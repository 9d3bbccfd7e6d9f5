#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsct/checkpoint.hpp"
#include "dsct/data.hpp"
#include "dsct/model.hpp"
#include "dsct/optim.hpp"

namespace dsct {

/// Position of the next optimizer step: 1-indexed epoch, batch within that
/// epoch, and the number of steps taken so far.
struct TrainCursor {
  std::size_t epoch = 1;
  std::size_t batch = 0;
  std::uint64_t step = 0;
  bool operator==(const TrainCursor&) const = default;
};

struct TrainingState {
  DsctModel<float> model;
  AdamState<float> adam;
  TrainCursor cursor;

  static TrainingState fresh(const ModelConfig& model_cfg, const TrainConfig& train_cfg);
};

struct StepLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;  // 1-based global step
  double loss = 0;
  double lr = 0;
};

// "epoch step loss lr" with shortest round-trip decimals.
std::string format_step_log(const StepLog& log);

struct SampleRef {
  std::size_t video;
  std::size_t frame;
};

/// Every (video, frame) of the dataset in the order visited during `epoch`:
/// a seeded permutation drawn from that epoch's shuffle stream.
std::vector<SampleRef> epoch_order(const std::vector<FrameSequence>& data, std::size_t epoch,
                                   const TrainConfig& cfg);

/// Forward, loss, backward and Adam update on one batch. Returns the loss.
double training_step(TrainingState& state, const std::vector<SampleTriple>& batch, double lr,
                     const TrainConfig& cfg);

struct TrainOptions {
  std::function<void(const StepLog&)> on_step;
  // Return after this global step (0: run to completion). The cursor then
  // points at the next step, so training can resume from it.
  std::uint64_t stop_after_step = 0;
  // Saved after every epoch and on return when non-empty.
  std::filesystem::path checkpoint_path;
};

void train(TrainingState& state, const std::vector<FrameSequence>& data, const TrainConfig& cfg,
           const TrainOptions& options = {});

Checkpoint to_checkpoint(TrainingState& state, const TrainConfig& cfg);
// Restores model, optimizer and cursor; `cfg`, if given, receives the
// training configuration stored alongside.
TrainingState training_state_from(const Checkpoint& ckpt, TrainConfig* cfg = nullptr);
// Model parameters and normalization statistics only.
DsctModel<float> model_from(const Checkpoint& ckpt);

/// Loads the manifest, trains from scratch (or resumes from
/// `out_dir/checkpoint.dsct` if present) and writes the log to
/// `out_dir/train.log` and `log`, if given.
Checkpoint train_loop(const std::filesystem::path& manifest, const TrainConfig& train_cfg,
                      const ModelConfig& model_cfg, const std::filesystem::path& out_dir,
                      std::ostream* log = nullptr);

}  // namespace dsct
