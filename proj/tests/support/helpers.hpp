#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dsct/config.hpp"
#include "dsct/data.hpp"
#include "dsct/image_io.hpp"
#include "dsct/rng.hpp"
#include "dsct/tensor.hpp"

namespace testing_support {

template <typename T>
dsct::Tensor<T> random_tensor(dsct::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  dsct::RngStream rng(seed, dsct::StreamPurpose::test, {0x7e57u, 0, 0});
  dsct::Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// A fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Smooth moving-pattern video: sums of drifting sinusoids per channel, so
// neighbouring frames are correlated like real footage.
dsct::FrameSequence synthetic_sequence(std::size_t frames, std::size_t height, std::size_t width,
                                       std::uint64_t seed);

// Writes each frame as frame_%04d.ppm (or .png).
void write_sequence(const dsct::FrameSequence& seq, const std::filesystem::path& dir,
                    const std::string& extension = ".ppm");

// Small model configuration for fast tests (base width 8).
dsct::ModelConfig tiny_config();

}  // namespace testing_support
