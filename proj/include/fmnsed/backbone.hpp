#pragma once

// Frame-wise MobileNetV3 ("fmn"). The MobileNetV3-Large block table with
// strides rearranged so a 128 x 1000 log-mel input is reduced to a single
// frequency bin and 250 time frames.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fmnsed/kernels.hpp"
#include "fmnsed/weights.hpp"

namespace fmnsed {

inline constexpr std::size_t kMelBins = 128;
inline constexpr std::size_t kInputFrames = 1000;
inline constexpr std::size_t kOutputFrames = 250;
inline constexpr double kFrameSeconds = 0.04;

/// Rounds v to the nearest multiple of divisor, never below divisor and
/// never more than 10% below v.
inline std::size_t make_divisible(double v, std::size_t divisor = 8) {
  if (!(v > 0.0)) throw ShapeError("make_divisible expects a positive value");
  const auto d = static_cast<double>(divisor);
  auto rounded = static_cast<std::size_t>(std::floor(v + d / 2.0) / d) * divisor;
  rounded = std::max(rounded, divisor);
  if (static_cast<double>(rounded) < 0.9 * v) rounded += divisor;
  return rounded;
}

struct Stride2 {
  std::size_t freq = 1;
  std::size_t time = 1;
  friend bool operator==(const Stride2&, const Stride2&) = default;
};

struct BlockSpec {
  std::size_t kernel = 3;
  std::size_t in_channels = 16;
  std::size_t expansion_channels = 16;
  std::size_t out_channels = 16;
  bool use_se = false;
  Activation activation = Activation::relu;
  Stride2 stride;

  bool has_expand() const { return expansion_channels != in_channels; }
  bool has_residual() const { return stride == Stride2{1, 1} && in_channels == out_channels; }
  std::size_t se_channels() const { return make_divisible(static_cast<double>(expansion_channels / 4)); }
};

struct FmnConfig {
  double alpha = 1.0;
  std::size_t stem_channels = 16;
  Stride2 stem_stride{2, 2};
  std::vector<BlockSpec> blocks;
  std::size_t embed_channels = 960;
};

namespace detail {

struct BaseBlock {
  std::size_t kernel;
  std::size_t expansion;
  std::size_t out;
  bool se;
  Activation act;
  Stride2 stride;
};

// MobileNetV3-Large. Block 1 downsamples both axes, the other canonical
// downsampling blocks (3, 6, 12) only frequency. Blocks 4 and 7, the first
// blocks of the two longest stride-1 runs, also downsample frequency.
inline constexpr std::array<BaseBlock, 15> kLargeTable{{
    {3, 16, 16, false, Activation::relu, {1, 1}},
    {3, 64, 24, false, Activation::relu, {2, 2}},
    {3, 72, 24, false, Activation::relu, {1, 1}},
    {5, 72, 40, true, Activation::relu, {2, 1}},
    {5, 120, 40, true, Activation::relu, {2, 1}},
    {5, 120, 40, true, Activation::relu, {1, 1}},
    {3, 240, 80, false, Activation::hardswish, {2, 1}},
    {3, 200, 80, false, Activation::hardswish, {2, 1}},
    {3, 184, 80, false, Activation::hardswish, {1, 1}},
    {3, 184, 80, false, Activation::hardswish, {1, 1}},
    {3, 480, 112, true, Activation::hardswish, {1, 1}},
    {3, 672, 112, true, Activation::hardswish, {1, 1}},
    {5, 672, 160, true, Activation::hardswish, {2, 1}},
    {5, 960, 160, true, Activation::hardswish, {1, 1}},
    {5, 960, 160, true, Activation::hardswish, {1, 1}},
}};
inline constexpr std::size_t kBaseStem = 16;
inline constexpr std::size_t kBaseEmbed = 960;

}  // namespace detail

inline void validate_fmn(const FmnConfig& cfg) {
  std::size_t freq = cfg.stem_stride.freq;
  std::size_t time = cfg.stem_stride.time;
  auto check_channels = [](std::size_t c, const std::string& what) {
    if (c == 0 || c % 8 != 0) throw ShapeError(what + " = " + std::to_string(c) + " is not a positive multiple of 8");
  };
  check_channels(cfg.stem_channels, "stem channels");
  check_channels(cfg.embed_channels, "embed channels");
  std::size_t prev = cfg.stem_channels;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const std::string tag = "block" + std::to_string(i);
    for (std::size_t s : {b.stride.freq, b.stride.time}) {
      if (s != 1 && s != 2) throw ShapeError(tag + " stride must be 1 or 2");
    }
    if (b.kernel % 2 == 0) throw ShapeError(tag + " kernel must be odd");
    if (b.in_channels != prev) throw ShapeError(tag + " input channels do not chain");
    check_channels(b.expansion_channels, tag + " expansion channels");
    check_channels(b.out_channels, tag + " output channels");
    freq *= b.stride.freq;
    time *= b.stride.time;
    prev = b.out_channels;
  }
  if (freq != kMelBins) throw ShapeError("frequency stride product is " + std::to_string(freq) + ", expected 128");
  if (time != kInputFrames / kOutputFrames) throw ShapeError("time stride product is " + std::to_string(time) + ", expected 4");
}

/// Width-scaled frame-wise MobileNetV3-Large.
inline FmnConfig build_fmn(double alpha) {
  if (!(alpha > 0.0)) throw ShapeError("width multiplier must be positive");
  FmnConfig cfg;
  cfg.alpha = alpha;
  cfg.stem_channels = make_divisible(detail::kBaseStem * alpha);
  cfg.embed_channels = make_divisible(detail::kBaseEmbed * alpha);
  std::size_t in = cfg.stem_channels;
  for (const auto& base : detail::kLargeTable) {
    BlockSpec b;
    b.kernel = base.kernel;
    b.in_channels = in;
    b.expansion_channels = make_divisible(base.expansion * alpha);
    b.out_channels = make_divisible(base.out * alpha);
    b.use_se = base.se;
    b.activation = base.act;
    b.stride = base.stride;
    cfg.blocks.push_back(b);
    in = b.out_channels;
  }
  validate_fmn(cfg);
  return cfg;
}

/// Parameter names and shapes. Batch norms are stored folded as a per-channel
/// scale (`.bn.w`) and shift (`.bn.b`).
inline ParamInventory fmn_inventory(const FmnConfig& cfg) {
  ParamInventory inv;
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin_g, std::size_t k) {
    inv.push_back({name + ".w", {cout, cin_g, k, k}, ParamInit::fan_in});
  };
  auto bn = [&](const std::string& prefix, std::size_t c) {
    inv.push_back({prefix + ".bn.w", {c}, ParamInit::one});
    inv.push_back({prefix + ".bn.b", {c}, ParamInit::zero});
  };
  conv("stem.conv", cfg.stem_channels, 1, 3);
  bn("stem", cfg.stem_channels);
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const std::string p = "block" + std::to_string(i);
    if (b.has_expand()) {
      conv(p + ".expand", b.expansion_channels, b.in_channels, 1);
      bn(p + ".expand", b.expansion_channels);
    }
    conv(p + ".dw", b.expansion_channels, 1, b.kernel);
    bn(p + ".dw", b.expansion_channels);
    if (b.use_se) {
      const std::size_t sq = b.se_channels();
      inv.push_back({p + ".se.fc1.w", {sq, b.expansion_channels, 1, 1}, ParamInit::fan_in});
      inv.push_back({p + ".se.fc1.b", {sq}, ParamInit::zero});
      inv.push_back({p + ".se.fc2.w", {b.expansion_channels, sq, 1, 1}, ParamInit::fan_in});
      inv.push_back({p + ".se.fc2.b", {b.expansion_channels}, ParamInit::zero});
    }
    conv(p + ".project", b.out_channels, b.expansion_channels, 1);
    bn(p + ".project", b.out_channels);
  }
  const std::size_t last = cfg.blocks.empty() ? cfg.stem_channels : cfg.blocks.back().out_channels;
  conv("final.conv", cfg.embed_channels, last, 1);
  bn("final", cfg.embed_channels);
  return inv;
}

namespace detail {

inline Tensor conv_bn_act(const Tensor& x, const WeightStore& w, const std::string& prefix, std::size_t cin,
                          std::size_t cout, std::size_t kernel, Stride2 stride, std::size_t groups,
                          Activation act) {
  ConvSpec spec;
  spec.in_channels = cin;
  spec.out_channels = cout;
  spec.kernel = {kernel, kernel};
  spec.stride = {stride.freq, stride.time};
  spec.padding = {(kernel - 1) / 2, (kernel - 1) / 2};
  spec.groups = groups;
  const Tensor& weight = w.get(prefix + ".w", {cout, cin / groups, kernel, kernel});
  Tensor y = conv2d(x, weight, spec);
  // ".conv.w" parameters carry their norm one level up ("stem.conv.w" -> "stem.bn.w")
  std::string norm = prefix;
  if (norm.size() > 5 && norm.ends_with(".conv")) norm.resize(norm.size() - 5);
  y = channel_affine(y, w.get(norm + ".bn.w", {cout}), w.get(norm + ".bn.b", {cout}));
  activation_inplace(y, act);
  return y;
}

inline Tensor squeeze_excite(const Tensor& x, const WeightStore& w, const std::string& prefix, std::size_t channels,
                             std::size_t squeeze) {
  const Tensor pooled = global_avg_pool(x);
  ConvSpec fc1;
  fc1.in_channels = channels;
  fc1.out_channels = squeeze;
  Tensor s = conv2d(pooled, w.get(prefix + ".fc1.w", {squeeze, channels, 1, 1}), w.get(prefix + ".fc1.b", {squeeze}),
                    fc1);
  activation_inplace(s, Activation::relu);
  ConvSpec fc2;
  fc2.in_channels = squeeze;
  fc2.out_channels = channels;
  s = conv2d(s, w.get(prefix + ".fc2.w", {channels, squeeze, 1, 1}), w.get(prefix + ".fc2.b", {channels}), fc2);
  activation_inplace(s, Activation::hardsigmoid);
  Tensor y = x;
  const std::size_t plane = x.dim(2) * x.dim(3);
  for (std::size_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
    const float g = s[bc];
    for (std::size_t i = 0; i < plane; ++i) y[bc * plane + i] *= g;
  }
  return y;
}

inline Tensor inverted_residual(const Tensor& x, const WeightStore& w, const std::string& p, const BlockSpec& b) {
  Tensor h = x;
  if (b.has_expand()) {
    h = conv_bn_act(h, w, p + ".expand", b.in_channels, b.expansion_channels, 1, {1, 1}, 1, b.activation);
  }
  h = conv_bn_act(h, w, p + ".dw", b.expansion_channels, b.expansion_channels, b.kernel, b.stride,
                  b.expansion_channels, b.activation);
  if (b.use_se) h = squeeze_excite(h, w, p + ".se", b.expansion_channels, b.se_channels());
  h = conv_bn_act(h, w, p + ".project", b.expansion_channels, b.out_channels, 1, {1, 1}, 1, Activation::identity);
  if (b.has_residual()) h = add(h, x);
  return h;
}

}  // namespace detail

/// Backbone feature map before the frequency axis is squeezed: [1, C, F, T/4]
/// for a [1, 128, T] log-mel input.
inline Tensor fmn_feature_map(const FmnConfig& cfg, const WeightStore& w, const Tensor& mel) {
  if (mel.rank() != 3 || mel.dim(0) != 1 || mel.dim(1) != kMelBins) {
    throw ShapeError("backbone input must be [1,128,T], got " + shape_str(mel.shape()));
  }
  Tensor x = mel.reshaped({1, 1, mel.dim(1), mel.dim(2)});
  x = detail::conv_bn_act(x, w, "stem.conv", 1, cfg.stem_channels, 3, cfg.stem_stride, 1, Activation::hardswish);
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    x = detail::inverted_residual(x, w, "block" + std::to_string(i), cfg.blocks[i]);
  }
  const std::size_t last = cfg.blocks.empty() ? cfg.stem_channels : cfg.blocks.back().out_channels;
  return detail::conv_bn_act(x, w, "final.conv", last, cfg.embed_channels, 1, {1, 1}, 1, Activation::hardswish);
}

/// Frame embeddings [embed_channels, 250] for a [1, 128, 1000] log-mel clip.
inline Tensor forward_fmn(const FmnConfig& cfg, const WeightStore& w, const Tensor& mel) {
  if (mel.shape() != Shape{1, kMelBins, kInputFrames}) {
    throw ShapeError("backbone input must be [1,128,1000], got " + shape_str(mel.shape()));
  }
  Tensor z = fmn_feature_map(cfg, w, mel);
  if (z.dim(2) != 1) throw ShapeError("backbone left " + std::to_string(z.dim(2)) + " frequency bins, expected 1");
  return std::move(z).reshaped({z.dim(1), z.dim(3)});
}

}  // namespace fmnsed
