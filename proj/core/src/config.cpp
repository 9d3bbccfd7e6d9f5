#include "dsct/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dsct/errors.hpp"

namespace dsct {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return value;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_size(key, item));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(xs[i]);
  }
  return s;
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string to_string(StageMode mode) {
  switch (mode) {
    case StageMode::dual: return "dual";
    case StageMode::coarse: return "coarse";
    case StageMode::fine: return "fine";
  }
  return "dual";
}

StageMode parse_stage_mode(const std::string& text) {
  if (text == "dual") return StageMode::dual;
  if (text == "coarse") return StageMode::coarse;
  if (text == "fine") return StageMode::fine;
  throw ConfigError("unknown stage_mode '" + text + "' (expected dual|coarse|fine)");
}

void ModelConfig::validate() const {
  if (base_channels == 0 || scale_channels[0] == 0 || scale_channels[1] == 0) {
    throw ConfigError("channel widths must be positive");
  }
  if (patch_size == 0 || heads == 0 || mlp_ratio == 0) {
    throw ConfigError("patch_size, heads and mlp_ratio must be positive");
  }
  if (pad_multiple == 0 || pad_multiple % (4 * patch_size) != 0) {
    throw ConfigError("pad_multiple " + std::to_string(pad_multiple) +
                      " must be a multiple of 4 * patch_size (two 2x downsamples then patching)");
  }
  // Attention widths: SCEM at both downsampled scales, TFAM at full and half
  // resolution.
  for (std::size_t width : {base_channels, scale_channels[0], scale_channels[1]}) {
    if (width % heads != 0) {
      throw ConfigError("channel width " + std::to_string(width) + " not divisible by heads " +
                        std::to_string(heads));
    }
  }
}

void NoiseConfig::validate() const {
  if (sigma < 0 || sigma_min < 0 || sigma_max < sigma_min) {
    throw ConfigError("noise sigma must be >= 0 and sigma_min <= sigma_max");
  }
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
  if (crop_size == 0) throw ConfigError("crop_size must be positive");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] < 1 || lr_decay_epochs[i] > epochs) {
      throw ConfigError("lr decay epochs must lie in [1, epochs]");
    }
    if (i && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      throw ConfigError("lr decay epochs must be strictly increasing");
    }
  }
  if (lr_decay_factor <= 0) throw ConfigError("lr_decay_factor must be positive");
  noise.validate();
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

void apply_settings(ModelConfig& cfg, const KeyValues& kv, bool ignore_unknown) {
  for (const auto& [key, value] : kv) {
    if (key == "base_channels") cfg.base_channels = parse_size(key, value);
    else if (key == "scale_channels") {
      auto xs = parse_size_list(key, value);
      if (xs.size() != 2) throw ConfigError("scale_channels needs exactly two widths");
      cfg.scale_channels = {xs[0], xs[1]};
    } else if (key == "patch_size") cfg.patch_size = parse_size(key, value);
    else if (key == "heads") cfg.heads = parse_size(key, value);
    else if (key == "mlp_ratio") cfg.mlp_ratio = parse_size(key, value);
    else if (key == "aggregation_mode") cfg.aggregation_mode = parse_aggregation_mode(value);
    else if (key == "enable_scem") cfg.enable_scem = parse_bool(key, value);
    else if (key == "enable_fskip") cfg.enable_fskip = parse_bool(key, value);
    else if (key == "enable_cfskip") cfg.enable_cfskip = parse_bool(key, value);
    else if (key == "enable_tfam_skip") cfg.enable_tfam_skip = parse_bool(key, value);
    else if (key == "share_branch_weights") cfg.share_branch_weights = parse_bool(key, value);
    else if (key == "stage_mode") cfg.stage_mode = parse_stage_mode(value);
    else if (key == "pad_multiple") cfg.pad_multiple = parse_size(key, value);
    else if (!ignore_unknown) throw ConfigError("unknown model config key '" + key + "'");
  }
}

void apply_settings(TrainConfig& cfg, const KeyValues& kv, bool ignore_unknown) {
  for (const auto& [key, value] : kv) {
    if (key == "epochs") cfg.epochs = parse_size(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_size(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "lr_decay_epochs") cfg.lr_decay_epochs = parse_size_list(key, value);
    else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_double(key, value);
    else if (key == "beta1") cfg.beta1 = parse_double(key, value);
    else if (key == "beta2") cfg.beta2 = parse_double(key, value);
    else if (key == "adam_eps") cfg.adam_eps = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "crop_size") cfg.crop_size = parse_size(key, value);
    else if (key == "noise_mode") {
      if (value == "fixed") cfg.noise.sampling = NoiseConfig::Sampling::fixed;
      else if (value == "uniform") cfg.noise.sampling = NoiseConfig::Sampling::uniform;
      else throw ConfigError("noise_mode must be fixed|uniform");
    } else if (key == "sigma") cfg.noise.sigma = parse_double(key, value);
    else if (key == "sigma_min") cfg.noise.sigma_min = parse_double(key, value);
    else if (key == "sigma_max") cfg.noise.sigma_max = parse_double(key, value);
    else if (key == "max_steps") cfg.max_steps = parse_size(key, value);
    else if (key == "aux_coarse_loss") cfg.aux_coarse_loss = parse_bool(key, value);
    else if (key == "max_frames_per_video") cfg.max_frames_per_video = parse_size(key, value);
    else if (!ignore_unknown) throw ConfigError("unknown training config key '" + key + "'");
  }
}

void apply_settings(ModelConfig& model, TrainConfig& train, const KeyValues& kv) {
  const KeyValues model_keys = to_key_values(ModelConfig{});
  KeyValues m, t;
  for (const auto& [k, v] : kv) (model_keys.count(k) ? m : t)[k] = v;
  apply_settings(model, m);
  apply_settings(train, t);
}

KeyValues to_key_values(const ModelConfig& cfg) {
  return {
      {"base_channels", std::to_string(cfg.base_channels)},
      {"scale_channels", std::to_string(cfg.scale_channels[0]) + "," + std::to_string(cfg.scale_channels[1])},
      {"patch_size", std::to_string(cfg.patch_size)},
      {"heads", std::to_string(cfg.heads)},
      {"mlp_ratio", std::to_string(cfg.mlp_ratio)},
      {"aggregation_mode", to_string(cfg.aggregation_mode)},
      {"enable_scem", bool_str(cfg.enable_scem)},
      {"enable_fskip", bool_str(cfg.enable_fskip)},
      {"enable_cfskip", bool_str(cfg.enable_cfskip)},
      {"enable_tfam_skip", bool_str(cfg.enable_tfam_skip)},
      {"share_branch_weights", bool_str(cfg.share_branch_weights)},
      {"stage_mode", to_string(cfg.stage_mode)},
      {"pad_multiple", std::to_string(cfg.pad_multiple)},
  };
}

KeyValues to_key_values(const TrainConfig& cfg) {
  return {
      {"epochs", std::to_string(cfg.epochs)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"learning_rate", format_double(cfg.learning_rate)},
      {"lr_decay_epochs", join(cfg.lr_decay_epochs)},
      {"lr_decay_factor", format_double(cfg.lr_decay_factor)},
      {"beta1", format_double(cfg.beta1)},
      {"beta2", format_double(cfg.beta2)},
      {"adam_eps", format_double(cfg.adam_eps)},
      {"seed", std::to_string(cfg.seed)},
      {"crop_size", std::to_string(cfg.crop_size)},
      {"noise_mode", cfg.noise.sampling == NoiseConfig::Sampling::fixed ? "fixed" : "uniform"},
      {"sigma", format_double(cfg.noise.sigma)},
      {"sigma_min", format_double(cfg.noise.sigma_min)},
      {"sigma_max", format_double(cfg.noise.sigma_max)},
      {"max_steps", std::to_string(cfg.max_steps)},
      {"aux_coarse_loss", bool_str(cfg.aux_coarse_loss)},
      {"max_frames_per_video", std::to_string(cfg.max_frames_per_video)},
  };
}

}  // namespace dsct
