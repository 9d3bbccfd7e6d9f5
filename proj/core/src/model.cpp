#include "dsct/model.hpp"

#include "dsct/errors.hpp"

namespace dsct {

namespace {

template <typename T>
Stem<T> make_stem(const std::string& name, std::size_t width, Initializer& init) {
  Stem<T> s;
  s.conv1 = Conv2d<T>(name + ".conv1", 3, width, 3, 1, init, false);
  s.bn1 = BatchNorm2d<T>(name + ".bn1", width);
  s.conv2 = Conv2d<T>(name + ".conv2", width, width, 3, 1, init, false);
  s.bn2 = BatchNorm2d<T>(name + ".bn2", width);
  return s;
}

template <typename T>
EncoderStage<T> make_stage(const std::string& name, std::size_t cin, std::size_t cout,
                           const ModelConfig& cfg, Initializer& init) {
  EncoderStage<T> st;
  st.down = Conv2d<T>(name + ".down", cin, cout, 3, 2, init);
  st.scem_enabled = cfg.enable_scem;
  if (cfg.enable_scem) {
    st.scem = ScemParams<T>(name + ".scem", cout, cfg.patch_size, cfg.heads, cfg.mlp_ratio, init);
  }
  st.conv1 = Conv2d<T>(name + ".conv1", cout, cout, 3, 1, init);
  st.conv2 = Conv2d<T>(name + ".conv2", cout, cout, 3, 1, init);
  return st;
}

template <typename T>
Encoder<T> make_encoder(const std::string& name, const ModelConfig& cfg, Initializer& init) {
  Encoder<T> e;
  e.stem = make_stem<T>(name + ".stem", cfg.base_channels, init);
  e.stages[0] = make_stage<T>(name + ".stage1", cfg.base_channels, cfg.scale_channels[0], cfg, init);
  e.stages[1] =
      make_stage<T>(name + ".stage2", cfg.scale_channels[0], cfg.scale_channels[1], cfg, init);
  return e;
}

template <typename T>
Decoder<T> make_decoder(const std::string& name, const ModelConfig& cfg, Initializer& init) {
  const std::size_t c0 = cfg.base_channels, c1 = cfg.scale_channels[0], c2 = cfg.scale_channels[1];
  Decoder<T> d;
  d.up[0].conv1 = Conv2d<T>(name + ".up1.conv1", c2, c2, 3, 1, init);
  d.up[0].conv2 = Conv2d<T>(name + ".up1.conv2", c2, 4 * c1, 3, 1, init);
  d.up[1].conv1 = Conv2d<T>(name + ".up2.conv1", c1, c1, 3, 1, init);
  d.up[1].conv2 = Conv2d<T>(name + ".up2.conv2", c1, 4 * c0, 3, 1, init);
  d.smooth1 = Conv2d<T>(name + ".smooth1", c0, c0, 3, 1, init);
  d.smooth2 = Conv2d<T>(name + ".smooth2", c0, 3, 3, 1, init);
  return d;
}

template <typename T>
void collect(Stem<T>& s, ParameterRefs<T>& out) {
  s.conv1.collect(out);
  s.bn1.collect(out);
  s.conv2.collect(out);
  s.bn2.collect(out);
}

template <typename T>
void collect(Encoder<T>& e, ParameterRefs<T>& out) {
  collect(e.stem, out);
  for (auto& st : e.stages) {
    st.down.collect(out);
    if (st.scem_enabled) st.scem.collect(out);
    st.conv1.collect(out);
    st.conv2.collect(out);
  }
}

template <typename T>
void collect(Decoder<T>& d, ParameterRefs<T>& out) {
  for (auto& u : d.up) {
    u.conv1.collect(out);
    u.conv2.collect(out);
  }
  d.smooth1.collect(out);
  d.smooth2.collect(out);
}

template <typename T>
Var<T> upsample(const Var<T>& x, const UpsampleLayer<T>& layer) {
  return pixel_shuffle(layer.conv2(relu(layer.conv1(x))), 2);
}

template <typename T>
struct Decoded {
  Var<T> half;   // after the first upsampling layer and its skip
  Var<T> image;  // padded-domain output
};

template <typename T>
Decoded<T> decode(const Var<T>& deepest, const Var<T>& skip_half, const Var<T>& skip_full,
                  const Decoder<T>& d) {
  Decoded<T> out;
  out.half = upsample(deepest, d.up[0]);
  if (skip_half.defined()) out.half = add(out.half, skip_half);
  Var<T> full = upsample(out.half, d.up[1]);
  if (skip_full.defined()) full = add(full, skip_full);
  out.image = d.smooth2(relu(d.smooth1(full)));
  return out;
}

template <typename T>
void check_frame(const Var<T>& x, const char* what) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw DimensionError(std::string(what) + ": expected [N,3,H,W] frames, got " + shape_str(s));
  }
}

}  // namespace

std::size_t padded_extent(std::size_t extent, std::size_t multiple) {
  return (extent + multiple - 1) / multiple * multiple;
}

template <typename T>
Var<T> pad_to_multiple(const Var<T>& x, std::size_t multiple) {
  const std::size_t h = x.dim(x.value().rank() - 2);
  const std::size_t w = x.dim(x.value().rank() - 1);
  const std::size_t ph = padded_extent(h, multiple) - h;
  const std::size_t pw = padded_extent(w, multiple) - w;
  if (ph == 0 && pw == 0) return x;
  return pad_reflect(x, 0, ph, 0, pw);
}

template <typename T>
DsctModel<T> DsctModel<T>::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  DsctModel<T> m;
  m.config = config;
  Initializer init(seed);
  if (config.stage_mode != StageMode::fine) {
    CoarseStage<T> c;
    const std::size_t branches = config.share_branch_weights ? 1 : 3;
    for (std::size_t b = 0; b < branches; ++b) {
      const std::string name =
          config.share_branch_weights ? "coarse.encoder" : "coarse.encoder" + std::to_string(b);
      c.encoders.push_back(make_encoder<T>(name, config, init));
    }
    if (config.enable_tfam_skip) {
      c.aggregators[0] = TfamParams<T>("coarse.tfam0", config.aggregation_mode, config.base_channels,
                                       config.patch_size, config.heads, config.mlp_ratio, init);
      c.aggregators[1] =
          TfamParams<T>("coarse.tfam1", config.aggregation_mode, config.scale_channels[0],
                        config.patch_size, config.heads, config.mlp_ratio, init);
    }
    c.fuse = Conv2d<T>("coarse.fuse", 3 * config.scale_channels[1], config.scale_channels[1], 1, 1,
                       init);
    c.decoder = make_decoder<T>("coarse.decoder", config, init);
    m.coarse = std::move(c);
  }
  if (config.stage_mode != StageMode::coarse) {
    FineStage<T> f;
    f.encoder = make_encoder<T>("fine.encoder", config, init);
    f.decoder = make_decoder<T>("fine.decoder", config, init);
    m.fine = std::move(f);
  }
  return m;
}

template <typename T>
ParameterRefs<T> DsctModel<T>::parameters() {
  ParameterRefs<T> out;
  if (coarse) {
    for (auto& e : coarse->encoders) collect(e, out);
    if (config.enable_tfam_skip) {
      for (auto& a : coarse->aggregators) a.collect(out);
    }
    coarse->fuse.collect(out);
    collect(coarse->decoder, out);
  }
  if (fine) {
    collect(fine->encoder, out);
    collect(fine->decoder, out);
  }
  return out;
}

template <typename T>
BufferRefs<T> DsctModel<T>::buffers() {
  BufferRefs<T> out;
  auto add_stem = [&](Stem<T>& s) {
    s.bn1.collect_buffers(out);
    s.bn2.collect_buffers(out);
  };
  if (coarse) {
    for (auto& e : coarse->encoders) add_stem(e.stem);
  }
  if (fine) add_stem(fine->encoder.stem);
  return out;
}

template <typename T>
void DsctModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t DsctModel<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.numel();
  return n;
}

template <typename T>
Var<T> initial_features(const Var<T>& frames, Stem<T>& stem, Mode mode) {
  Var<T> x = relu(stem.bn1(stem.conv1(frames), mode));
  return relu(stem.bn2(stem.conv2(x), mode));
}

template <typename T>
Var<T> encoder_stage(const Var<T>& x, const EncoderStage<T>& stage) {
  const Var<T> down = stage.down(x);
  const std::size_t h = down.dim(2), w = down.dim(3);
  if (stage.scem_enabled && (h % stage.scem.patch != 0 || w % stage.scem.patch != 0)) {
    throw DimensionError("encoder_stage: downsampled extent " + shape_str(down.shape()) +
                         " not divisible by patch " + std::to_string(stage.scem.patch));
  }
  const Var<T> conv = stage.conv2(relu(stage.conv1(down)));
  if (!stage.scem_enabled) return conv;
  return add(scem_forward(down, stage.scem), conv);
}

template <typename T>
EncoderFeatures<T> encode(const Var<T>& frames, Encoder<T>& encoder, Mode mode) {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 || (s[2] / 2) % 2 != 0 ||
      (s[3] / 2) % 2 != 0) {
    throw DimensionError("encode: spatial extents of " + shape_str(s) +
                         " must be divisible by 4");
  }
  EncoderFeatures<T> f;
  f.scales[0] = initial_features(frames, encoder.stem, mode);
  f.scales[1] = encoder_stage(f.scales[0], encoder.stages[0]);
  f.scales[2] = encoder_stage(f.scales[1], encoder.stages[1]);
  return f;
}

template <typename T>
CoarseOutput<T> coarse_forward(const FrameTriple<T>& triple, DsctModel<T>& model, Mode mode) {
  if (!model.coarse) throw ConfigError("coarse_forward: model has no coarse stage");
  check_frame(triple.prev, "coarse_forward");
  require_same_shape(triple.prev.shape(), triple.cur.shape(), "coarse_forward");
  require_same_shape(triple.next.shape(), triple.cur.shape(), "coarse_forward");
  const ModelConfig& cfg = model.config;
  CoarseStage<T>& stage = *model.coarse;
  const std::size_t n = triple.cur.dim(0), h = triple.cur.dim(2), w = triple.cur.dim(3);

  const std::array<Var<T>, 3> padded{pad_to_multiple(triple.prev, cfg.pad_multiple),
                                     pad_to_multiple(triple.cur, cfg.pad_multiple),
                                     pad_to_multiple(triple.next, cfg.pad_multiple)};
  // per_frame[f].scales[s]
  std::array<EncoderFeatures<T>, 3> per_frame;
  if (stage.encoders.size() == 1) {
    const EncoderFeatures<T> joint =
        encode(concat<T>({padded[0], padded[1], padded[2]}, 0), stage.encoders[0], mode);
    for (std::size_t s = 0; s < 3; ++s) {
      auto parts = split(joint.scales[s], 0, {n, n, n});
      for (std::size_t f = 0; f < 3; ++f) per_frame[f].scales[s] = parts[f];
    }
  } else {
    for (std::size_t f = 0; f < 3; ++f) per_frame[f] = encode(padded[f], stage.encoders[f], mode);
  }

  std::array<Var<T>, 2> temporal;
  if (cfg.enable_tfam_skip) {
    for (std::size_t s = 0; s < 2; ++s) {
      temporal[s] = tfam_forward(per_frame[0].scales[s], per_frame[1].scales[s],
                                 per_frame[2].scales[s], stage.aggregators[s]);
    }
  }
  const Var<T> fused = stage.fuse(concat<T>(
      {per_frame[0].scales[2], per_frame[1].scales[2], per_frame[2].scales[2]}, 1));
  const Decoded<T> decoded = decode(fused, temporal[1], temporal[0], stage.decoder);

  CoarseOutput<T> out;
  out.image = crop(decoded.image, 0, 0, h, w);
  out.skips.half = decoded.half;
  out.skips.quarter = fused;
  return out;
}

template <typename T>
Var<T> fine_forward(const Var<T>& image, const CrossStageSkips<T>* skips, DsctModel<T>& model,
                    Mode mode) {
  if (!model.fine) throw ConfigError("fine_forward: model has no fine stage");
  check_frame(image, "fine_forward");
  const ModelConfig& cfg = model.config;
  FineStage<T>& stage = *model.fine;
  const std::size_t h = image.dim(2), w = image.dim(3);
  const Var<T> padded = pad_to_multiple(image, cfg.pad_multiple);
  const bool use_cf = skips != nullptr && cfg.enable_cfskip;

  Encoder<T>& enc = stage.encoder;
  const Var<T> e0 = initial_features(padded, enc.stem, mode);
  Var<T> e1 = encoder_stage(e0, enc.stages[0]);
  if (use_cf) {
    require_same_shape(skips->half.shape(), e1.shape(), "fine_forward cf-skip (half)");
    e1 = add(e1, skips->half);
  }
  Var<T> e2 = encoder_stage(e1, enc.stages[1]);
  if (use_cf) {
    require_same_shape(skips->quarter.shape(), e2.shape(), "fine_forward cf-skip (quarter)");
    e2 = add(e2, skips->quarter);
  }
  const Var<T> none;
  const Decoded<T> decoded = decode(e2, cfg.enable_fskip ? e1 : none,
                                    cfg.enable_fskip ? e0 : none, stage.decoder);
  return crop(decoded.image, 0, 0, h, w);
}

template <typename T>
DsctOutput<T> dsct_forward(const FrameTriple<T>& triple, DsctModel<T>& model, Mode mode) {
  DsctOutput<T> out;
  switch (model.config.stage_mode) {
    case StageMode::coarse:
      out.coarse = coarse_forward(triple, model, mode).image;
      break;
    case StageMode::fine:
      out.fine = fine_forward<T>(triple.cur, nullptr, model, mode);
      break;
    case StageMode::dual: {
      const CoarseOutput<T> c = coarse_forward(triple, model, mode);
      out.coarse = c.image;
      out.fine = fine_forward(c.image, &c.skips, model, mode);
      break;
    }
  }
  return out;
}

template <typename T>
void zero_attention_branches(DsctModel<T>& model) {
  auto zero_encoder = [](Encoder<T>& e) {
    for (auto& st : e.stages) {
      if (st.scem_enabled) st.scem.zero_branches();
    }
  };
  if (model.coarse) {
    for (auto& e : model.coarse->encoders) zero_encoder(e);
    for (auto& a : model.coarse->aggregators) a.zero_branches();
  }
  if (model.fine) zero_encoder(model.fine->encoder);
}

std::uint64_t conv_flops(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t out_h,
                         std::size_t out_w) {
  return 2ull * cout * cin * kernel * kernel * out_h * out_w;
}

namespace {

std::uint64_t linear_flops(std::size_t din, std::size_t dout, std::size_t rows) {
  return 2ull * din * dout * rows;
}

// Self-attention inside P x P windows at one scale with `width` channels.
std::uint64_t msa_flops(std::size_t width, std::size_t pixels, std::size_t patch) {
  const std::uint64_t projections = 4 * linear_flops(width, width, pixels);
  // QK^T and AV summed over heads: 2 * pixels * P^2 * width each.
  const std::uint64_t products = 2 * (2ull * pixels * patch * patch * width);
  return projections + products;
}

std::uint64_t mlp_flops(std::size_t width, std::size_t ratio, std::size_t pixels) {
  return linear_flops(width, ratio * width, pixels) + linear_flops(ratio * width, width, pixels);
}

std::uint64_t scem_flops(const ModelConfig& cfg, std::size_t width, std::size_t pixels) {
  const std::size_t p2 = cfg.patch_size * cfg.patch_size;
  const std::size_t rows = pixels / p2 * width;  // one row per (patch, channel)
  const std::uint64_t channel = 3 * linear_flops(p2, p2, rows) + 2 * (2ull * pixels * width * width);
  return channel + msa_flops(width, pixels, cfg.patch_size) + mlp_flops(width, cfg.mlp_ratio, pixels);
}

std::uint64_t encoder_flops(const ModelConfig& cfg, std::size_t h, std::size_t w) {
  const std::size_t c0 = cfg.base_channels, c1 = cfg.scale_channels[0], c2 = cfg.scale_channels[1];
  std::uint64_t total = conv_flops(3, c0, 3, h, w) + conv_flops(c0, c0, 3, h, w);
  std::size_t cin = c0;
  std::size_t sh = h, sw = w;
  for (std::size_t cout : {c1, c2}) {
    sh /= 2;
    sw /= 2;
    total += conv_flops(cin, cout, 3, sh, sw);
    if (cfg.enable_scem) total += scem_flops(cfg, cout, sh * sw);
    total += 2 * conv_flops(cout, cout, 3, sh, sw);
    cin = cout;
  }
  return total;
}

std::uint64_t decoder_flops(const ModelConfig& cfg, std::size_t h, std::size_t w) {
  const std::size_t c0 = cfg.base_channels, c1 = cfg.scale_channels[0], c2 = cfg.scale_channels[1];
  return conv_flops(c2, c2, 3, h / 4, w / 4) + conv_flops(c2, 4 * c1, 3, h / 4, w / 4) +
         conv_flops(c1, c1, 3, h / 2, w / 2) + conv_flops(c1, 4 * c0, 3, h / 2, w / 2) +
         conv_flops(c0, c0, 3, h, w) + conv_flops(c0, 3, 3, h, w);
}

std::uint64_t aggregator_flops(const ModelConfig& cfg, std::size_t width, std::size_t h,
                               std::size_t w) {
  switch (cfg.aggregation_mode) {
    case AggregationMode::mean:
      return 0;
    case AggregationMode::conv:
      return conv_flops(3 * width, width, 3, h, w);
    case AggregationMode::tfam:
      return conv_flops(3 * width, width, 3, h, w) + msa_flops(width, h * w, cfg.patch_size) +
             mlp_flops(width, cfg.mlp_ratio, h * w) + conv_flops(width, width, 3, h, w);
  }
  return 0;
}

}  // namespace

std::uint64_t flops_estimate(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  const std::size_t h = padded_extent(height, cfg.pad_multiple);
  const std::size_t w = padded_extent(width, cfg.pad_multiple);
  std::uint64_t total = 0;
  if (cfg.stage_mode != StageMode::fine) {
    total += 3 * encoder_flops(cfg, h, w);
    if (cfg.enable_tfam_skip) {
      total += aggregator_flops(cfg, cfg.base_channels, h, w);
      total += aggregator_flops(cfg, cfg.scale_channels[0], h / 2, w / 2);
    }
    total += conv_flops(3 * cfg.scale_channels[1], cfg.scale_channels[1], 1, h / 4, w / 4);
    total += decoder_flops(cfg, h, w);
  }
  if (cfg.stage_mode != StageMode::coarse) {
    total += encoder_flops(cfg, h, w) + decoder_flops(cfg, h, w);
  }
  return total;
}

template struct DsctModel<float>;
template struct DsctModel<double>;

#define DSCT_INSTANTIATE(T)                                                                  \
  template Var<T> initial_features(const Var<T>&, Stem<T>&, Mode);                           \
  template Var<T> encoder_stage(const Var<T>&, const EncoderStage<T>&);                      \
  template EncoderFeatures<T> encode(const Var<T>&, Encoder<T>&, Mode);                      \
  template CoarseOutput<T> coarse_forward(const FrameTriple<T>&, DsctModel<T>&, Mode);       \
  template Var<T> fine_forward(const Var<T>&, const CrossStageSkips<T>*, DsctModel<T>&, Mode); \
  template DsctOutput<T> dsct_forward(const FrameTriple<T>&, DsctModel<T>&, Mode);           \
  template Var<T> pad_to_multiple(const Var<T>&, std::size_t);                               \
  template void zero_attention_branches(DsctModel<T>&);

DSCT_INSTANTIATE(float)
DSCT_INSTANTIATE(double)
#undef DSCT_INSTANTIATE

}  // namespace dsct
