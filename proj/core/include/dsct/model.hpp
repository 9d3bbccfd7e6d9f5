#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "dsct/attention.hpp"
#include "dsct/config.hpp"
#include "dsct/layers.hpp"

namespace dsct {

/// Two conv(3x3) + BN + ReLU blocks at full resolution.
template <typename T>
struct Stem {
  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
};

/// Stride-2 downsample followed by the parallel SCEM and two-conv branches,
/// summed.
template <typename T>
struct EncoderStage {
  Conv2d<T> down;
  bool scem_enabled = true;
  ScemParams<T> scem;
  Conv2d<T> conv1;
  Conv2d<T> conv2;
};

template <typename T>
struct Encoder {
  Stem<T> stem;
  std::array<EncoderStage<T>, 2> stages;
};

/// Two 3x3 convs then a x2 pixel shuffle.
template <typename T>
struct UpsampleLayer {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
};

template <typename T>
struct Decoder {
  std::array<UpsampleLayer<T>, 2> up;
  Conv2d<T> smooth1;
  Conv2d<T> smooth2;
};

template <typename T>
struct CoarseStage {
  // One shared encoder, or one per frame (prev, cur, next).
  std::vector<Encoder<T>> encoders;
  // Temporal aggregation at full and half resolution.
  std::array<TfamParams<T>, 2> aggregators;
  Conv2d<T> fuse;  // 1x1, 3 * C2 -> C2
  Decoder<T> decoder;
};

template <typename T>
struct FineStage {
  Encoder<T> encoder;
  Decoder<T> decoder;
};

template <typename T>
struct DsctModel {
  ModelConfig config;
  std::optional<CoarseStage<T>> coarse;  // absent in fine-only mode
  std::optional<FineStage<T>> fine;      // absent in coarse-only mode

  static DsctModel create(const ModelConfig& config, std::uint64_t seed);

  ParameterRefs<T> parameters();
  BufferRefs<T> buffers();
  void zero_grad();
  std::size_t parameter_count();
};

/// Encoder features at full, half and quarter resolution (F^C, F^SC, F^SC).
template <typename T>
struct EncoderFeatures {
  std::array<Var<T>, 3> scales;
};

/// Coarse decoder features handed to the fine encoder, in the padded domain.
template <typename T>
struct CrossStageSkips {
  Var<T> half;     // [N, C1, H/2, W/2]
  Var<T> quarter;  // [N, C2, H/4, W/4]
};

template <typename T>
struct FrameTriple {
  Var<T> prev, cur, next;  // each [N, 3, H, W]
};

template <typename T>
struct CoarseOutput {
  Var<T> image;  // cropped to the input extent
  CrossStageSkips<T> skips;
};

template <typename T>
struct DsctOutput {
  Var<T> coarse;  // undefined in fine-only mode
  Var<T> fine;    // undefined in coarse-only mode
  // What the configured stage mode treats as the denoised frame.
  const Var<T>& final() const { return fine.defined() ? fine : coarse; }
};

template <typename T>
Var<T> initial_features(const Var<T>& frames, Stem<T>& stem, Mode mode);

template <typename T>
Var<T> encoder_stage(const Var<T>& x, const EncoderStage<T>& stage);

template <typename T>
EncoderFeatures<T> encode(const Var<T>& frames, Encoder<T>& encoder, Mode mode);

template <typename T>
CoarseOutput<T> coarse_forward(const FrameTriple<T>& triple, DsctModel<T>& model, Mode mode);

/// `skips` may be null (fine-only mode, or CF-skips disabled).
template <typename T>
Var<T> fine_forward(const Var<T>& image, const CrossStageSkips<T>* skips, DsctModel<T>& model,
                    Mode mode);

template <typename T>
DsctOutput<T> dsct_forward(const FrameTriple<T>& triple, DsctModel<T>& model, Mode mode);

/// Reflect-pads the spatial axes up to the next multiple (bottom/right only).
template <typename T>
Var<T> pad_to_multiple(const Var<T>& x, std::size_t multiple);

/// Zeroes every attention value/mix projection, MLP output layer and TFAM
/// output conv, leaving only the convolutional pathway and residuals.
template <typename T>
void zero_attention_branches(DsctModel<T>& model);

std::size_t padded_extent(std::size_t extent, std::size_t multiple);

/// Multiply-accumulate flops (2 per MAC) of convolutions, linear layers and
/// attention products for one forward pass of a single triple.
std::uint64_t flops_estimate(const ModelConfig& config, std::size_t height, std::size_t width);

// 2 * Cout * Cin * k * k * Hout * Wout.
std::uint64_t conv_flops(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t out_h,
                         std::size_t out_w);

}  // namespace dsct
