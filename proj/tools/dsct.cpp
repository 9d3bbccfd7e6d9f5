#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dsct/checkpoint.hpp"
#include "dsct/config.hpp"
#include "dsct/errors.hpp"
#include "dsct/eval.hpp"
#include "dsct/gradient_suite.hpp"
#include "dsct/model.hpp"
#include "dsct/training.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_sigmas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size() || v < 0) throw CLI::ValidationError("--sigmas", "bad value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--sigmas", "no values");
  return out;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  std::size_t h = 0, w = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (x == std::string::npos ||
      std::from_chars(begin, begin + x, h).ptr != begin + x ||
      std::from_chars(begin + x + 1, end, w).ptr != end || h == 0 || w == 0) {
    throw CLI::ValidationError("--size", "expected HxW, got '" + text + "'");
  }
  return {h, w};
}

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out) {
  dsct::ModelConfig model;
  dsct::TrainConfig train;
  if (!config.empty()) dsct::apply_settings(model, train, dsct::read_key_value_file(config));
  dsct::train_loop(data, train, model, out, &std::cout);
  std::cout << "checkpoint written to " << (out / "checkpoint.dsct").string() << '\n';
  return 0;
}

int cmd_denoise(const fs::path& ckpt, const fs::path& in, const fs::path& out, double sigma,
                bool pre_noised, bool emit_coarse, std::uint64_t seed) {
  dsct::DsctModel<float> model = dsct::model_from(dsct::load_checkpoint(ckpt));
  dsct::DenoiseOptions options;
  if (!pre_noised) options.sigma = sigma;
  options.emit_coarse = emit_coarse;
  options.eval_seed = seed;
  const std::size_t n = dsct::denoise_sequence(model, in, out, options);
  std::cout << "frames=" << n << '\n';
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const std::string& sigmas,
             std::uint64_t seed, std::size_t max_frames) {
  dsct::DsctModel<float> model = dsct::model_from(dsct::load_checkpoint(ckpt));
  const auto report =
      dsct::evaluate_dataset(model, dsct::load_dataset(data), parse_sigmas(sigmas), seed, max_frames);
  std::cout << report.format();
  return 0;
}

int cmd_gradcheck(bool full_model, std::size_t coords, std::uint64_t seed) {
  dsct::GradientSuiteOptions options;
  options.include_full_model = full_model;
  options.full_model_coords = coords;
  options.seed = seed;
  bool ok = true;
  options.on_case = [&](const dsct::GradientCase& c) {
    ok = ok && c.passed();
    std::printf("%-32s max_rel_err=%.3e tol=%.0e coords=%zu kinked=%zu %s\n", c.name.c_str(),
                c.result.max_relative_error, c.tolerance, c.result.coordinates_checked,
                c.result.kinked_coordinates,
                c.passed() ? "ok" : "FAILED");
    if (!c.passed() || c.result.max_relative_error > 1e-6) {
      std::printf("  worst: %s[%zu] analytic=%.9g numeric=%.9g\n", c.result.worst_target.c_str(),
                  c.result.worst_index, c.result.worst_analytic, c.result.worst_numeric);
    }
    std::fflush(stdout);
  };
  dsct::run_gradient_suite(options);
  return ok ? 0 : 1;
}

int cmd_flops(const fs::path& config, const std::string& size) {
  dsct::ModelConfig model;
  dsct::TrainConfig train;
  if (!config.empty()) dsct::apply_settings(model, train, dsct::read_key_value_file(config));
  const auto [h, w] = parse_size(size);
  const std::uint64_t flops = dsct::flops_estimate(model, h, w);
  const std::size_t params = dsct::DsctModel<float>::create(model, 0).parameter_count();
  std::printf("size=%zux%zu\npadded=%zux%zu\nflops=%llu\ngflops=%.4f\nparameters=%zu\n", h, w,
              dsct::padded_extent(h, model.pad_multiple), dsct::padded_extent(w, model.pad_multiple),
              static_cast<unsigned long long>(flops), static_cast<double>(flops) / 1e9, params);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stage spatial-channel transformer video denoiser"};
  app.require_subcommand(1);

  fs::path config, data, out, ckpt, in;
  double sigma = 25;
  bool pre_noised = false, emit_coarse = false, full_model = false;
  std::uint64_t seed = 0;
  std::string sigmas = "10,20,30,40,50", size;
  std::size_t max_frames = dsct::kMaxEvalFrames, coords = 0;

  auto* train = app.add_subcommand("train", "Train a model from a dataset manifest");
  train->add_option("--config", config, "key=value configuration file")->check(CLI::ExistingFile);
  train->add_option("--data", data, "manifest listing one frame directory per line")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory for checkpoint and log")->required();

  auto* denoise = app.add_subcommand("denoise", "Denoise a directory of frames");
  denoise->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  denoise->add_option("--in", in, "input frame directory")->required()->check(CLI::ExistingDirectory);
  denoise->add_option("--out", out, "output directory")->required();
  auto* sigma_opt = denoise->add_option("--sigma", sigma, "AWGN level (0-255 scale) to synthesize");
  denoise->add_flag("--pre-noised", pre_noised, "inputs are already noisy")->excludes(sigma_opt);
  denoise->add_flag("--emit-coarse", emit_coarse, "also write the coarse-stage output");
  denoise->add_option("--seed", seed, "noise seed");

  auto* eval = app.add_subcommand("eval", "Evaluate PSNR over a dataset and noise levels");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--sigmas", sigmas, "comma-separated noise levels")->capture_default_str();
  eval->add_option("--seed", seed, "evaluation noise seed");
  eval->add_option("--max-frames", max_frames, "frames per sequence (0: all)")->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_flag("--full-model", full_model, "also check the reduced-width full model");
  gradcheck->add_option("--coords", coords, "sampled coordinates per tensor in the full model (0: all)");
  gradcheck->add_option("--seed", seed, "seed for inputs and sampling");

  auto* flops = app.add_subcommand("flops", "Estimate forward flops for one triple");
  flops->add_option("--config", config, "key=value configuration file")->check(CLI::ExistingFile);
  flops->add_option("--size", size, "frame size HxW")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, data, out);
    if (*denoise) return cmd_denoise(ckpt, in, out, sigma, pre_noised, emit_coarse, seed);
    if (*eval) return cmd_eval(ckpt, data, sigmas, seed, max_frames);
    if (*gradcheck) return cmd_gradcheck(full_model, coords, seed == 0 ? 1 : seed);
    if (*flops) return cmd_flops(config, size);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
