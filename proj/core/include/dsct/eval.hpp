#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsct/data.hpp"
#include "dsct/model.hpp"

namespace dsct {

/// 10 * log10(1 / MSE) over all elements; +inf for identical inputs.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

Tensor<float> clip01(Tensor<float> x);

struct SequenceResult {
  std::string id;
  std::vector<double> frame_psnr;  // denoised, clipped, per evaluated frame
  std::vector<double> noisy_psnr;  // unclipped noisy input vs clean
  double mean_psnr = 0;
  double mean_noisy_psnr = 0;
};

struct SigmaResult {
  double sigma = 0;
  std::vector<SequenceResult> sequences;
  std::size_t frames = 0;
  double mean_psnr = 0;        // over every evaluated frame
  double mean_noisy_psnr = 0;
};

struct EvalReport {
  std::vector<SigmaResult> sigmas;
  std::uint64_t eval_seed = 0;
  std::string config_digest;

  // Human-readable table followed by key=value lines.
  std::string format() const;
};

// Arithmetic mean; +inf if any value is +inf.
double mean_of_values(const std::vector<double>& values);

// FNV-1a over the canonical key=value form of the config, as 16 hex digits.
std::string config_digest(const ModelConfig& cfg);

/// Denoises one noisy [3,H,W] frame from its triple (eval mode, no grad)
/// and returns the final and, when present, the coarse output, clipped.
struct DenoisedFrame {
  Tensor<float> final;
  std::optional<Tensor<float>> coarse;
};
DenoisedFrame denoise_frame(DsctModel<float>& model, const Tensor<float>& prev,
                            const Tensor<float>& cur, const Tensor<float>& next);

inline constexpr std::size_t kMaxEvalFrames = 85;

EvalReport evaluate_dataset(DsctModel<float>& model, const std::vector<FrameSequence>& data,
                            const std::vector<double>& sigmas, std::uint64_t eval_seed,
                            std::size_t max_frames = kMaxEvalFrames);

struct DenoiseOptions {
  // Synthesize AWGN at this level; absent means the inputs are already noisy.
  std::optional<double> sigma;
  std::uint64_t eval_seed = 0;
  bool emit_coarse = false;
};

/// Writes `out_dir/denoised/<name>` for every input frame, plus
/// `out_dir/coarse/<name>` with `emit_coarse`. Returns the frame count.
std::size_t denoise_sequence(DsctModel<float>& model, const std::filesystem::path& input_dir,
                             const std::filesystem::path& out_dir, const DenoiseOptions& options);

}  // namespace dsct
