#include "dsct/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "dsct/errors.hpp"
#include "dsct/image_io.hpp"

namespace dsct {

namespace {

bool is_frame_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".png";
}

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw DimensionError(std::string(what) + " index exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) {
    throw IngestionError(directory.string() + ": not a readable directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file() && is_frame_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

FrameSequence load_sequence(const std::filesystem::path& directory) {
  const std::vector<std::filesystem::path> files = list_frame_files(directory);
  if (files.empty()) throw IngestionError(directory.string() + ": no PPM or PNG frames");

  FrameSequence seq;
  seq.source_id = directory.filename().empty() ? directory.parent_path().filename().string()
                                                : directory.filename().string();
  for (const auto& file : files) {
    const Image8 img = read_image(file);
    if (!seq.frames.empty() && (img.width != seq.width() || img.height != seq.height())) {
      throw IngestionError(file.string() + ": frame is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + " but the sequence is " +
                           std::to_string(seq.width()) + "x" + std::to_string(seq.height()));
    }
    seq.frames.push_back(image_to_tensor(img));
  }
  return seq;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError(manifest.string() + ": cannot open manifest");
  const std::filesystem::path base = manifest.parent_path();
  std::vector<std::filesystem::path> dirs;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(first, last - first + 1);
    dirs.push_back(p.is_absolute() ? p : base / p);
  }
  if (dirs.empty()) throw IngestionError(manifest.string() + ": manifest lists no sequences");
  return dirs;
}

std::vector<FrameSequence> load_dataset(const std::filesystem::path& manifest) {
  std::vector<FrameSequence> out;
  for (const auto& dir : read_manifest(manifest)) out.push_back(load_sequence(dir));
  return out;
}

Tensor<float> add_awgn(const Tensor<float>& frame, double sigma, RngStream& stream) {
  if (!(sigma >= 0)) throw ConfigError("add_awgn: sigma must be non-negative");
  Tensor<float> out = frame;
  if (sigma == 0) return out;
  const double s = sigma / 255.0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(out[i]) + s * stream.normal());
  }
  return out;
}

TripleIndices make_triple(std::size_t length, std::size_t i) {
  if (i >= length) {
    throw DimensionError("make_triple: frame " + std::to_string(i) + " out of range for length " +
                         std::to_string(length));
  }
  return {i == 0 ? 0 : i - 1, i, i + 1 < length ? i + 1 : i};
}

TripleIndices make_triple(const FrameSequence& seq, std::size_t i) { return make_triple(seq.size(), i); }

Augmentation Augmentation::then(Augmentation next) const {
  // next * this = F^fn R^rn F^f R^r, and R^rn F = F R^-rn.
  const unsigned rn = next.quarter_turns();
  const unsigned moved = flips() ? (4 - rn) % 4 : rn;
  const unsigned turns = (moved + quarter_turns()) % 4;
  const bool flip = flips() != next.flips();
  return {static_cast<std::uint8_t>((flip ? 4 : 0) + turns)};
}

Augmentation Augmentation::inverse() const {
  if (flips()) return *this;
  return rotation((4 - quarter_turns()) % 4);
}

Tensor<float> apply_augmentation(const Tensor<float>& x, Augmentation aug) {
  if (x.rank() < 2) throw DimensionError("apply_augmentation: need at least 2 axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.numel() / (h * w);
  const unsigned r = aug.quarter_turns();
  const bool swap = r % 2 == 1;
  const std::size_t oh = swap ? w : h, ow = swap ? h : w;
  Shape shape = x.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor<float> out(shape);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data() + p * h * w;
    float* dst = out.data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j0 = 0; j0 < ow; ++j0) {
        const std::size_t j = aug.flips() ? ow - 1 - j0 : j0;
        std::size_t si = 0, sj = 0;
        switch (r) {
          case 0: si = i; sj = j; break;
          case 1: si = j; sj = w - 1 - i; break;
          case 2: si = h - 1 - i; sj = w - 1 - j; break;
          default: si = h - 1 - j; sj = i; break;
        }
        dst[i * ow + j0] = src[si * w + sj];
      }
    }
  }
  return out;
}

SampleTriple crop_and_augment(const std::array<const Tensor<float>*, 4>& frames, std::size_t crop,
                              RngStream& stream) {
  const Shape& shape = frames[0]->shape();
  if (shape.size() != 3) throw DimensionError("crop_and_augment: expected [C,H,W] frames");
  for (const auto* f : frames) require_same_shape(f->shape(), shape, "crop_and_augment");
  const std::size_t h = shape[1], w = shape[2];
  const std::size_t ch = crop == 0 ? h : crop, cw = crop == 0 ? w : crop;
  if (ch > h || cw > w) {
    throw DimensionError("crop_and_augment: crop " + std::to_string(crop) + " exceeds frame " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  SampleTriple s;
  s.crop_top = static_cast<std::size_t>(stream.below(h - ch + 1));
  s.crop_left = static_cast<std::size_t>(stream.below(w - cw + 1));
  if (ch == cw) {
    s.augmentation.code = static_cast<std::uint8_t>(stream.below(Augmentation::kCount));
  } else {
    static constexpr std::uint8_t kShapePreserving[4] = {0, 2, 4, 6};
    s.augmentation.code = kShapePreserving[stream.below(4)];
  }
  std::array<Tensor<float>, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    Tensor<float> c(Shape{shape[0], ch, cw});
    for (std::size_t ci = 0; ci < shape[0]; ++ci) {
      for (std::size_t y = 0; y < ch; ++y) {
        const float* src = frames[k]->data() + (ci * h + s.crop_top + y) * w + s.crop_left;
        std::copy(src, src + cw, c.data() + (ci * ch + y) * cw);
      }
    }
    out[k] = apply_augmentation(c, s.augmentation);
  }
  s.prev = std::move(out[0]);
  s.cur = std::move(out[1]);
  s.next = std::move(out[2]);
  s.target = std::move(out[3]);
  return s;
}

SampleTriple synthesize_sample(const FrameSequence& seq, std::size_t video, std::size_t frame,
                               std::size_t epoch, const TrainConfig& config) {
  const TripleIndices idx = make_triple(seq, frame);
  const StreamAddress address{narrow(epoch, "epoch"), narrow(video, "video"), narrow(frame, "frame")};

  RngStream augment(config.seed, StreamPurpose::augment, address);
  const Tensor<float>& clean = seq.frames[idx.cur];
  SampleTriple s = crop_and_augment(
      {&seq.frames[idx.prev], &clean, &seq.frames[idx.next], &clean}, config.crop_size, augment);

  const NoiseConfig& noise = config.noise;
  if (noise.sampling == NoiseConfig::Sampling::fixed) {
    s.sigma = noise.sigma;
  } else {
    RngStream draw(config.seed, StreamPurpose::sigma, address);
    s.sigma = draw.uniform(noise.sigma_min, noise.sigma_max);
  }
  // One stream, consumed in order, gives independent noise per frame.
  RngStream n(config.seed, StreamPurpose::noise, address);
  s.prev = add_awgn(s.prev, s.sigma, n);
  s.cur = add_awgn(s.cur, s.sigma, n);
  s.next = add_awgn(s.next, s.sigma, n);
  s.video = video;
  s.frame = frame;
  return s;
}

Tensor<float> eval_noisy_frame(const Tensor<float>& clean, double sigma, std::uint64_t eval_seed,
                               std::size_t video, std::size_t frame) {
  const float sigma_key = static_cast<float>(sigma);
  RngStream stream(eval_seed, StreamPurpose::eval_noise,
                   {narrow(video, "video"), narrow(frame, "frame"), std::bit_cast<std::uint32_t>(sigma_key)});
  return add_awgn(clean, sigma, stream);
}

Tensor<float> stack(const std::vector<const Tensor<float>*>& tensors) {
  if (tensors.empty()) throw DimensionError("stack: no tensors");
  const Shape& inner = tensors.front()->shape();
  Shape shape{tensors.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor<float> out(shape);
  const std::size_t n = tensors.front()->numel();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    require_same_shape(tensors[i]->shape(), inner, "stack");
    std::copy(tensors[i]->data(), tensors[i]->data() + n, out.data() + i * n);
  }
  return out;
}

}  // namespace dsct
