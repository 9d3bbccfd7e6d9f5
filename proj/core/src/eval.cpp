#include "dsct/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dsct/errors.hpp"
#include "dsct/image_io.hpp"

namespace dsct {

namespace {

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sigma_label(double sigma) { return format_double(sigma); }

Tensor<float> batched(const Tensor<float>& frame) {
  Shape s{1};
  s.insert(s.end(), frame.shape().begin(), frame.shape().end());
  return frame.reshaped(s);
}

Tensor<float> unbatched(const Tensor<float>& x) {
  return x.reshaped(Shape(x.shape().begin() + 1, x.shape().end()));
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Tensor<float> clip01(Tensor<float> x) {
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], 0.0f, 1.0f);
  return x;
}

double mean_of_values(const std::vector<double>& values) {
  if (values.empty()) return 0;
  double acc = 0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

std::string config_digest(const ModelConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : format_key_values(to_key_values(cfg))) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DenoisedFrame denoise_frame(DsctModel<float>& model, const Tensor<float>& prev,
                            const Tensor<float>& cur, const Tensor<float>& next) {
  NoGradGuard no_grad;
  const FrameTriple<float> triple{Var<float>::constant(batched(prev)),
                                  Var<float>::constant(batched(cur)),
                                  Var<float>::constant(batched(next))};
  const DsctOutput<float> out = dsct_forward(triple, model, Mode::eval);
  DenoisedFrame result;
  result.final = clip01(unbatched(out.final().value()));
  if (out.coarse.defined()) result.coarse = clip01(unbatched(out.coarse.value()));
  return result;
}

EvalReport evaluate_dataset(DsctModel<float>& model, const std::vector<FrameSequence>& data,
                            const std::vector<double>& sigmas, std::uint64_t eval_seed,
                            std::size_t max_frames) {
  EvalReport report;
  report.eval_seed = eval_seed;
  report.config_digest = config_digest(model.config);
  for (double sigma : sigmas) {
    SigmaResult sr;
    sr.sigma = sigma;
    std::vector<double> all, all_noisy;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const FrameSequence& seq = data[j];
      const std::size_t n = max_frames == 0 ? seq.size() : std::min(seq.size(), max_frames);
      // Each frame gets one noise realization, shared by every triple using it.
      std::vector<Tensor<float>> noisy;
      noisy.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        noisy.push_back(eval_noisy_frame(seq.frames[i], sigma, eval_seed, j, i));
      }
      SequenceResult res;
      res.id = seq.source_id;
      for (std::size_t i = 0; i < n; ++i) {
        const TripleIndices t = make_triple(n, i);
        const DenoisedFrame d = denoise_frame(model, noisy[t.prev], noisy[t.cur], noisy[t.next]);
        res.frame_psnr.push_back(psnr(d.final, seq.frames[i]));
        res.noisy_psnr.push_back(psnr(noisy[i], seq.frames[i]));
      }
      res.mean_psnr = mean_of_values(res.frame_psnr);
      res.mean_noisy_psnr = mean_of_values(res.noisy_psnr);
      all.insert(all.end(), res.frame_psnr.begin(), res.frame_psnr.end());
      all_noisy.insert(all_noisy.end(), res.noisy_psnr.begin(), res.noisy_psnr.end());
      sr.sequences.push_back(std::move(res));
    }
    sr.frames = all.size();
    sr.mean_psnr = mean_of_values(all);
    sr.mean_noisy_psnr = mean_of_values(all_noisy);
    report.sigmas.push_back(std::move(sr));
  }
  return report;
}

std::string EvalReport::format() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-24s %8s %12s %12s\n", "sigma", "sequence", "frames",
                "noisy_dB", "denoised_dB");
  out << line;
  for (const auto& s : sigmas) {
    for (const auto& seq : s.sequences) {
      std::snprintf(line, sizeof line, "%-8s %-24s %8zu %12s %12s\n", sigma_label(s.sigma).c_str(),
                    seq.id.c_str(), seq.frame_psnr.size(), fixed(seq.mean_noisy_psnr, 4).c_str(),
                    fixed(seq.mean_psnr, 4).c_str());
      out << line;
    }
    std::snprintf(line, sizeof line, "%-8s %-24s %8zu %12s %12s\n", sigma_label(s.sigma).c_str(),
                  "[mean]", s.frames, fixed(s.mean_noisy_psnr, 4).c_str(),
                  fixed(s.mean_psnr, 4).c_str());
    out << line;
  }
  out << "eval_seed=" << eval_seed << '\n';
  out << "config_digest=" << config_digest << '\n';
  for (const auto& s : sigmas) {
    const std::string key = "sigma_" + sigma_label(s.sigma);
    out << key << ".frames=" << s.frames << '\n';
    out << key << ".psnr=" << fixed(s.mean_psnr, 6) << '\n';
    out << key << ".noisy_psnr=" << fixed(s.mean_noisy_psnr, 6) << '\n';
    for (const auto& seq : s.sequences) {
      out << key << ".seq." << seq.id << ".psnr=" << fixed(seq.mean_psnr, 6) << '\n';
    }
  }
  return out.str();
}

std::size_t denoise_sequence(DsctModel<float>& model, const std::filesystem::path& input_dir,
                             const std::filesystem::path& out_dir, const DenoiseOptions& options) {
  if (options.emit_coarse && model.config.stage_mode == StageMode::fine) {
    throw ConfigError("denoise_sequence: a fine-only model has no coarse output to emit");
  }
  const std::vector<std::filesystem::path> files = list_frame_files(input_dir);
  const FrameSequence seq = load_sequence(input_dir);
  if (files.size() != seq.size()) {
    throw IngestionError(input_dir.string() + ": frame listing changed while reading");
  }

  std::vector<Tensor<float>> noisy;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    noisy.push_back(options.sigma ? eval_noisy_frame(seq.frames[i], *options.sigma,
                                                     options.eval_seed, 0, i)
                                  : seq.frames[i]);
  }
  const std::filesystem::path denoised_dir = out_dir / "denoised";
  const std::filesystem::path coarse_dir = out_dir / "coarse";
  std::filesystem::create_directories(denoised_dir);
  if (options.emit_coarse) std::filesystem::create_directories(coarse_dir);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TripleIndices t = make_triple(seq, i);
    const DenoisedFrame d = denoise_frame(model, noisy[t.prev], noisy[t.cur], noisy[t.next]);
    write_image(denoised_dir / files[i].filename(), tensor_to_image(d.final));
    if (options.emit_coarse) write_image(coarse_dir / files[i].filename(), tensor_to_image(*d.coarse));
  }
  return seq.size();
}

}  // namespace dsct
