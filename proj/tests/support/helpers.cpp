#include "helpers.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace testing_support {

TempDir::TempDir(const std::string& tag) {
  static unsigned counter = 0;
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / ("dsct_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    if (std::filesystem::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

dsct::FrameSequence synthetic_sequence(std::size_t frames, std::size_t height, std::size_t width,
                                       std::uint64_t seed) {
  dsct::RngStream rng(seed, dsct::StreamPurpose::test, {0x5e9u, 0, 0});
  struct Wave {
    double fy, fx, phase, drift, amp;
  };
  Wave waves[3][3];
  for (auto& channel : waves) {
    for (auto& w : channel) {
      w = {rng.uniform(0.02, 0.12), rng.uniform(0.02, 0.12), rng.uniform(0, 2 * std::numbers::pi),
           rng.uniform(0.05, 0.3), rng.uniform(0.08, 0.16)};
    }
  }
  dsct::FrameSequence seq;
  seq.source_id = "synthetic" + std::to_string(seed);
  for (std::size_t f = 0; f < frames; ++f) {
    dsct::Tensor<float> t(dsct::Shape{3, height, width});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          double v = 0.5;
          for (const Wave& w : waves[c]) {
            v += w.amp * std::sin(w.fy * y + w.fx * x + w.phase + w.drift * f);
          }
          // Quantize like an 8-bit source so files round-trip exactly.
          v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
          t[(c * height + y) * width + x] = static_cast<float>(v);
        }
      }
    }
    seq.frames.push_back(std::move(t));
  }
  return seq;
}

void write_sequence(const dsct::FrameSequence& seq, const std::filesystem::path& dir,
                    const std::string& extension) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu", i);
    dsct::write_image(dir / (name + extension), dsct::tensor_to_image(seq.frames[i]));
  }
}

dsct::ModelConfig tiny_config() {
  dsct::ModelConfig cfg;
  cfg.base_channels = 8;
  cfg.scale_channels = {8, 16};
  cfg.heads = 4;
  return cfg;
}

}  // namespace testing_support
