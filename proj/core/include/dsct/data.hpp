#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsct/config.hpp"
#include "dsct/rng.hpp"
#include "dsct/tensor.hpp"

namespace dsct {

struct FrameSequence {
  std::vector<Tensor<float>> frames;  // each [3, H, W] in [0, 1]
  std::string source_id;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.front().dim(1); }
  std::size_t width() const { return frames.front().dim(2); }
};

// PPM and PNG files of a directory in lexicographic file-name order.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& directory);

// Frames of one directory in lexicographic file-name order.
FrameSequence load_sequence(const std::filesystem::path& directory);

// One directory per line; blank lines and '#' comments are skipped and
// relative paths are resolved against the manifest's own directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

std::vector<FrameSequence> load_dataset(const std::filesystem::path& manifest);

// frame + N(0, (sigma/255)^2) per element, unclipped.
Tensor<float> add_awgn(const Tensor<float>& frame, double sigma, RngStream& stream);

struct TripleIndices {
  std::size_t prev, cur, next;
  bool operator==(const TripleIndices&) const = default;
};

// Neighbours of frame i with edge replication at both ends.
TripleIndices make_triple(std::size_t length, std::size_t i);
TripleIndices make_triple(const FrameSequence& seq, std::size_t i);

/// Element of the dihedral group of the square: `quarter_turns`
/// counter-clockwise rotations followed by an optional horizontal flip.
struct Augmentation {
  std::uint8_t code = 0;  // flip * 4 + quarter_turns

  static constexpr std::size_t kCount = 8;
  static Augmentation identity() { return {0}; }
  static Augmentation rotation(unsigned quarter_turns) {
    return {static_cast<std::uint8_t>(quarter_turns % 4)};
  }
  static Augmentation hflip() { return {4}; }
  static Augmentation vflip() { return {6}; }

  bool flips() const { return code >= 4; }
  unsigned quarter_turns() const { return code % 4; }
  bool preserves_shape_of_rectangles() const { return quarter_turns() % 2 == 0; }

  // (a.then(b))(x) == b(a(x))
  Augmentation then(Augmentation next) const;
  Augmentation inverse() const;
  bool operator==(const Augmentation&) const = default;
};

// Applies to every [..., H, W] plane of x.
Tensor<float> apply_augmentation(const Tensor<float>& x, Augmentation aug);

struct SampleTriple {
  Tensor<float> prev, cur, next;  // noisy, [3, h, w]
  Tensor<float> target;           // clean current frame
  double sigma = 0;
  std::size_t video = 0;
  std::size_t frame = 0;
  std::size_t crop_top = 0;
  std::size_t crop_left = 0;
  Augmentation augmentation;
};

/// Draws one crop offset and one augmentation from `stream` and applies them
/// to all four frames. `crop` of 0 keeps the full frame. Frames that are not
/// square only draw shape-preserving augmentations.
SampleTriple crop_and_augment(const std::array<const Tensor<float>*, 4>& frames, std::size_t crop,
                              RngStream& stream);

/// The training sample for (epoch, video, frame): a pure function of the
/// training seed and that address.
SampleTriple synthesize_sample(const FrameSequence& seq, std::size_t video, std::size_t frame,
                               std::size_t epoch, const TrainConfig& config);

// Noisy copy of frame `frame` of `video` used by evaluation at noise level sigma.
Tensor<float> eval_noisy_frame(const Tensor<float>& clean, double sigma, std::uint64_t eval_seed,
                               std::size_t video, std::size_t frame);

// Stacks equally shaped tensors along a new leading axis.
Tensor<float> stack(const std::vector<const Tensor<float>*>& tensors);

}  // namespace dsct
