#include "dsct/training.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "dsct/errors.hpp"

namespace dsct {

namespace {

constexpr const char* kModelPrefix = "model.";
constexpr const char* kTrainPrefix = "train.";

KeyValues prefixed(const KeyValues& kv, const std::string& prefix) {
  KeyValues out;
  for (const auto& [k, v] : kv) out[prefix + k] = v;
  return out;
}

KeyValues unprefixed(const KeyValues& kv, const std::string& prefix) {
  KeyValues out;
  for (const auto& [k, v] : kv) {
    if (k.compare(0, prefix.size(), prefix) == 0) out[k.substr(prefix.size())] = v;
  }
  return out;
}

std::uint64_t parse_u64(const Checkpoint& ckpt, const std::string& key) {
  const std::string& text = ckpt.setting(key);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw CorruptCheckpointError("checkpoint setting '" + key + "' is not an integer");
  }
}

template <typename T>
void assign(Tensor<T>& dst, const Tensor<T>& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw CorruptCheckpointError("checkpoint tensor '" + name + "' has shape " +
                                 shape_str(src.shape()) + ", model expects " + shape_str(dst.shape()));
  }
  dst = src;
}

void load_weights(DsctModel<float>& model, const Checkpoint& ckpt) {
  for (auto* p : model.parameters()) assign(p->value, ckpt.get<float>(p->name), p->name);
  for (auto& [name, state] : model.buffers()) {
    assign(state->running_mean, ckpt.get<float>(name + ".running_mean"), name);
    assign(state->running_var, ckpt.get<float>(name + ".running_var"), name);
    state->populated = true;
  }
}

ModelConfig model_config_from(const Checkpoint& ckpt) {
  ModelConfig cfg;
  try {
    apply_settings(cfg, unprefixed(ckpt.config, kModelPrefix));
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError(std::string("checkpoint model config: ") + e.what());
  }
  return cfg;
}

}  // namespace

TrainingState TrainingState::fresh(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  train_cfg.validate();
  TrainingState s{DsctModel<float>::create(model_cfg, train_cfg.seed), {}, {}};
  s.adam = AdamState<float>::zeros_like(s.model.parameters());
  return s;
}

std::string format_step_log(const StepLog& log) {
  return std::to_string(log.epoch) + " " + std::to_string(log.step) + " " +
         format_double(log.loss) + " " + format_double(log.lr);
}

std::vector<SampleRef> epoch_order(const std::vector<FrameSequence>& data, std::size_t epoch,
                                   const TrainConfig& cfg) {
  std::vector<SampleRef> order;
  for (std::size_t j = 0; j < data.size(); ++j) {
    std::size_t n = data[j].size();
    if (cfg.max_frames_per_video != 0) n = std::min(n, cfg.max_frames_per_video);
    for (std::size_t i = 0; i < n; ++i) order.push_back({j, i});
  }
  RngStream shuffle(cfg.seed, StreamPurpose::shuffle, {static_cast<std::uint32_t>(epoch), 0, 0});
  for (std::size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[shuffle.below(k)]);
  }
  return order;
}

double training_step(TrainingState& state, const std::vector<SampleTriple>& batch, double lr,
                     const TrainConfig& cfg) {
  std::vector<const Tensor<float>*> prev, cur, next, target;
  for (const auto& s : batch) {
    prev.push_back(&s.prev);
    cur.push_back(&s.cur);
    next.push_back(&s.next);
    target.push_back(&s.target);
  }
  const FrameTriple<float> triple{Var<float>::constant(stack(prev)),
                                  Var<float>::constant(stack(cur)),
                                  Var<float>::constant(stack(next))};
  const Tensor<float> clean = stack(target);

  DsctModel<float>& model = state.model;
  model.zero_grad();
  const DsctOutput<float> out = dsct_forward(triple, model, Mode::train);
  Var<float> loss = l2_loss(out.final(), clean);
  if (cfg.aux_coarse_loss && out.coarse.defined() && out.fine.defined()) {
    loss = add(loss, l2_loss(out.coarse, clean));
  }
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("training_step: non-finite loss");
  backward(loss);
  adam_step(model.parameters(), state.adam, lr, AdamHyper::from(cfg));
  return value;
}

void train(TrainingState& state, const std::vector<FrameSequence>& data, const TrainConfig& cfg,
           const TrainOptions& options) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  auto save = [&] {
    if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, to_checkpoint(state, cfg));
  };
  TrainCursor& cur = state.cursor;
  while (cur.epoch <= cfg.epochs) {
    const std::vector<SampleRef> order = epoch_order(data, cur.epoch, cfg);
    const std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double lr = lr_schedule(cur.epoch, cfg);
    while (cur.batch < batches) {
      if (cfg.max_steps != 0 && cur.step >= cfg.max_steps) {
        save();
        return;
      }
      std::vector<SampleTriple> batch;
      const std::size_t begin = cur.batch * cfg.batch_size;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      for (std::size_t k = begin; k < end; ++k) {
        const SampleRef ref = order[k];
        try {
          batch.push_back(synthesize_sample(data[ref.video], ref.video, ref.frame, cur.epoch, cfg));
        } catch (const std::exception& e) {
          throw IngestionError("sample " + data[ref.video].source_id + " frame " +
                               std::to_string(ref.frame) + " (epoch " + std::to_string(cur.epoch) +
                               "): " + e.what());
        }
      }
      const double loss = training_step(state, batch, lr, cfg);
      ++cur.batch;
      ++cur.step;
      if (options.on_step) options.on_step({cur.epoch, cur.step, loss, lr});
      if (options.stop_after_step != 0 && cur.step >= options.stop_after_step) {
        if (cur.batch == batches) {
          ++cur.epoch;
          cur.batch = 0;
        }
        save();
        return;
      }
    }
    ++cur.epoch;
    cur.batch = 0;
    save();
  }
}

Checkpoint to_checkpoint(TrainingState& state, const TrainConfig& cfg) {
  Checkpoint ckpt;
  ckpt.config = prefixed(to_key_values(state.model.config), kModelPrefix);
  for (const auto& [k, v] : prefixed(to_key_values(cfg), kTrainPrefix)) ckpt.config[k] = v;
  ckpt.config["state.epoch"] = std::to_string(state.cursor.epoch);
  ckpt.config["state.batch"] = std::to_string(state.cursor.batch);
  ckpt.config["state.step"] = std::to_string(state.cursor.step);
  ckpt.config["adam.t"] = std::to_string(state.adam.t);

  const ParameterRefs<float> params = state.model.parameters();
  for (const auto* p : params) ckpt.tensors.push_back({p->name, p->value});
  for (const auto& [name, bn] : state.model.buffers()) {
    ckpt.tensors.push_back({name + ".running_mean", bn->running_mean});
    ckpt.tensors.push_back({name + ".running_var", bn->running_var});
  }
  for (std::size_t k = 0; k < params.size() && k < state.adam.m.size(); ++k) {
    ckpt.tensors.push_back({"adam.m/" + params[k]->name, state.adam.m[k]});
    ckpt.tensors.push_back({"adam.v/" + params[k]->name, state.adam.v[k]});
  }
  return ckpt;
}

DsctModel<float> model_from(const Checkpoint& ckpt) {
  DsctModel<float> model = DsctModel<float>::create(model_config_from(ckpt), 0);
  load_weights(model, ckpt);
  return model;
}

TrainingState training_state_from(const Checkpoint& ckpt, TrainConfig* cfg) {
  TrainingState s{model_from(ckpt), {}, {}};
  const ParameterRefs<float> params = s.model.parameters();
  s.adam = AdamState<float>::zeros_like(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    assign(s.adam.m[k], ckpt.get<float>("adam.m/" + params[k]->name), params[k]->name);
    assign(s.adam.v[k], ckpt.get<float>("adam.v/" + params[k]->name), params[k]->name);
  }
  s.adam.t = parse_u64(ckpt, "adam.t");
  s.cursor.epoch = static_cast<std::size_t>(parse_u64(ckpt, "state.epoch"));
  s.cursor.batch = static_cast<std::size_t>(parse_u64(ckpt, "state.batch"));
  s.cursor.step = parse_u64(ckpt, "state.step");
  if (cfg != nullptr) {
    *cfg = TrainConfig{};
    try {
      apply_settings(*cfg, unprefixed(ckpt.config, kTrainPrefix));
    } catch (const ConfigError& e) {
      throw CorruptCheckpointError(std::string("checkpoint training config: ") + e.what());
    }
  }
  return s;
}

Checkpoint train_loop(const std::filesystem::path& manifest, const TrainConfig& train_cfg,
                      const ModelConfig& model_cfg, const std::filesystem::path& out_dir,
                      std::ostream* log) {
  train_cfg.validate();
  model_cfg.validate();
  const std::vector<FrameSequence> data = load_dataset(manifest);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path ckpt_path = out_dir / "checkpoint.dsct";

  TrainingState state = std::filesystem::exists(ckpt_path)
                            ? training_state_from(load_checkpoint(ckpt_path))
                            : TrainingState::fresh(model_cfg, train_cfg);
  std::ofstream log_file(out_dir / "train.log", std::ios::app);
  TrainOptions options;
  options.checkpoint_path = ckpt_path;
  options.on_step = [&](const StepLog& entry) {
    const std::string line = format_step_log(entry);
    log_file << line << '\n' << std::flush;
    if (log != nullptr) *log << line << '\n' << std::flush;
  };
  train(state, data, train_cfg, options);
  Checkpoint ckpt = to_checkpoint(state, train_cfg);
  save_checkpoint(ckpt_path, ckpt);
  return ckpt;
}

}  // namespace dsct
