#pragma once

// Numeric kernels shared by every model component. All kernels are pure,
// deterministic, single-threaded, and accumulate reductions in double.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "fmnsed/profiling.hpp"
#include "fmnsed/tensor.hpp"

namespace fmnsed {

struct Hw {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Hw&, const Hw&) = default;
};

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Hw kernel{1, 1};
  Hw stride{1, 1};
  Hw padding{0, 0};
  Hw dilation{1, 1};
  std::size_t groups = 1;

  void validate() const {
    if (in_channels == 0 || out_channels == 0 || groups == 0) {
      throw ShapeError("conv channels and groups must be positive");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
      throw ShapeError("conv channels (" + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                       ") not divisible by groups " + std::to_string(groups));
    }
    if (kernel.h == 0 || kernel.w == 0 || stride.h == 0 || stride.w == 0 || dilation.h == 0 ||
        dilation.w == 0) {
      throw ShapeError("conv kernel, stride and dilation must be >= 1");
    }
  }

  /// floor((n + 2p - d(k-1) - 1)/s) + 1, or 0 when the window never fits.
  static std::size_t out_extent(std::size_t n, std::size_t k, std::size_t s, std::size_t p, std::size_t d) {
    const std::int64_t span = static_cast<std::int64_t>(n + 2 * p) - static_cast<std::int64_t>(d * (k - 1)) - 1;
    if (span < 0) return 0;
    return static_cast<std::size_t>(span) / s + 1;
  }

  Hw output_size(Hw in) const {
    return {out_extent(in.h, kernel.h, stride.h, padding.h, dilation.h),
            out_extent(in.w, kernel.w, stride.w, padding.w, dilation.w)};
  }
};

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

inline void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw ShapeError(what + " is " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

// Range of output indices o with 0 <= o*s - p + k*d < n.
inline std::pair<std::size_t, std::size_t> valid_out_range(std::size_t n_in, std::size_t n_out, std::size_t s,
                                                           std::size_t p, std::size_t kd) {
  const std::int64_t shift = static_cast<std::int64_t>(kd) - static_cast<std::int64_t>(p);
  // lo: smallest o with o*s + shift >= 0
  std::int64_t lo = 0;
  if (shift < 0) lo = (-shift + static_cast<std::int64_t>(s) - 1) / static_cast<std::int64_t>(s);
  // hi: one past largest o with o*s + shift <= n_in - 1
  const std::int64_t top = static_cast<std::int64_t>(n_in) - 1 - shift;
  std::int64_t hi = top < 0 ? 0 : top / static_cast<std::int64_t>(s) + 1;
  hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(n_out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline void conv2d_impl(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec, Tensor& y) {
  const std::size_t batch = x.dim(0);
  const Hw in{x.dim(2), x.dim(3)};
  const Hw out = spec.output_size(in);
  const std::size_t cin_g = spec.in_channels / spec.groups;
  const std::size_t cout_g = spec.out_channels / spec.groups;
  const std::size_t plane_in = in.h * in.w;
  const std::size_t plane_out = out.h * out.w;
  const bool pointwise = spec.kernel == Hw{1, 1} && spec.stride == Hw{1, 1} && spec.padding == Hw{0, 0};

  std::vector<double> acc(plane_out);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < spec.groups; ++g) {
      for (std::size_t oc = 0; oc < cout_g; ++oc) {
        const std::size_t co = g * cout_g + oc;
        const double init = bias != nullptr ? (*bias)[co] : 0.0;
        std::fill(acc.begin(), acc.end(), init);
        for (std::size_t ic = 0; ic < cin_g; ++ic) {
          const std::size_t ci = g * cin_g + ic;
          const float* xin = x.ptr() + (b * spec.in_channels + ci) * plane_in;
          const float* wk = w.ptr() + (co * cin_g + ic) * spec.kernel.h * spec.kernel.w;
          if (pointwise) {
            const double wv = wk[0];
            for (std::size_t p = 0; p < plane_out; ++p) acc[p] += wv * xin[p];
            continue;
          }
          for (std::size_t ky = 0; ky < spec.kernel.h; ++ky) {
            const auto [oy0, oy1] =
                valid_out_range(in.h, out.h, spec.stride.h, spec.padding.h, ky * spec.dilation.h);
            for (std::size_t kx = 0; kx < spec.kernel.w; ++kx) {
              const double wv = wk[ky * spec.kernel.w + kx];
              const auto [ox0, ox1] =
                  valid_out_range(in.w, out.w, spec.stride.w, spec.padding.w, kx * spec.dilation.w);
              if (ox0 >= ox1) continue;
              for (std::size_t oy = oy0; oy < oy1; ++oy) {
                const std::size_t iy = oy * spec.stride.h + ky * spec.dilation.h - spec.padding.h;
                const float* row = xin + iy * in.w;
                double* arow = acc.data() + oy * out.w;
                const std::size_t ix0 = ox0 * spec.stride.w + kx * spec.dilation.w - spec.padding.w;
                if (spec.stride.w == 1) {
                  const float* src = row + ix0;
                  for (std::size_t ox = ox0; ox < ox1; ++ox) arow[ox] += wv * src[ox - ox0];
                } else {
                  for (std::size_t ox = ox0; ox < ox1; ++ox) {
                    arow[ox] += wv * row[ix0 + (ox - ox0) * spec.stride.w];
                  }
                }
              }
            }
          }
        }
        float* dst = y.ptr() + (b * spec.out_channels + co) * plane_out;
        for (std::size_t p = 0; p < plane_out; ++p) dst[p] = static_cast<float>(acc[p]);
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation over [B, Cin, H, W] with weights [Cout, Cin/groups, kh, kw].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec) {
  spec.validate();
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(w, 4, "conv2d weight");
  detail::require_dim(x.dim(1), spec.in_channels, "conv2d input channel dim (axis 1)");
  detail::require_dim(w.dim(0), spec.out_channels, "conv2d weight out-channel dim (axis 0)");
  detail::require_dim(w.dim(1), spec.in_channels / spec.groups, "conv2d weight in-channel dim (axis 1)");
  detail::require_dim(w.dim(2), spec.kernel.h, "conv2d weight kernel height (axis 2)");
  detail::require_dim(w.dim(3), spec.kernel.w, "conv2d weight kernel width (axis 3)");
  if (bias != nullptr) {
    detail::require_rank(*bias, 1, "conv2d bias");
    detail::require_dim(bias->dim(0), spec.out_channels, "conv2d bias length");
  }
  const Hw out = spec.output_size({x.dim(2), x.dim(3)});
  if (out.h == 0) throw ShapeError("conv2d output height is empty for input height " + std::to_string(x.dim(2)));
  if (out.w == 0) throw ShapeError("conv2d output width is empty for input width " + std::to_string(x.dim(3)));

  Tensor y({x.dim(0), spec.out_channels, out.h, out.w});
  detail::conv2d_impl(x, w, bias, spec, y);
  profiling::record_macs(static_cast<std::uint64_t>(x.dim(0)) * (spec.in_channels / spec.groups) * spec.kernel.h *
                         spec.kernel.w * spec.out_channels * out.h * out.w);
  return y;
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const ConvSpec& spec) { return conv2d(x, w, nullptr, spec); }
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvSpec& spec) {
  return conv2d(x, w, &bias, spec);
}

/// Position-wise affine map over the last axis: y = x w^T + b.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr) {
  detail::require_rank(w, 2, "linear weight");
  if (x.rank() == 0) throw ShapeError("linear input must have rank >= 1");
  const std::size_t din = w.dim(1);
  const std::size_t dout = w.dim(0);
  detail::require_dim(x.dim(x.rank() - 1), din, "linear input last dim");
  if (bias != nullptr) {
    detail::require_rank(*bias, 1, "linear bias");
    detail::require_dim(bias->dim(0), dout, "linear bias length");
  }
  const std::size_t rows = x.size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.ptr() + r * din;
    float* yr = y.ptr() + r * dout;
    for (std::size_t o = 0; o < dout; ++o) {
      const float* wr = w.ptr() + o * din;
      double acc = bias != nullptr ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += static_cast<double>(xr[i]) * wr[i];
      yr[o] = static_cast<float>(acc);
    }
  }
  profiling::record_macs(static_cast<std::uint64_t>(rows) * din * dout);
  return y;
}

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) { return linear(x, w, &bias); }

/// Numerically stable softmax along `axis`.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(axis);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::size_t outer = x.size() / (n * inner);
  Tensor y(x.shape());
  std::vector<double> e(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max<double>(mx, x[base + k * inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        e[k] = std::exp(static_cast<double>(x[base + k * inner]) - mx);
        sum += e[k];
      }
      for (std::size_t k = 0; k < n; ++k) y[base + k * inner] = static_cast<float>(e[k] / sum);
    }
  }
  return y;
}

/// Per-channel inference batch norm. Channels live on axis 1 for rank >= 2
/// inputs, on axis 0 for vectors.
inline Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                               const Tensor& running_var, double eps) {
  const std::size_t axis = x.rank() >= 2 ? 1 : 0;
  const std::size_t channels = x.dim(axis);
  for (const Tensor* t : {&gamma, &beta, &running_mean, &running_var}) {
    detail::require_rank(*t, 1, "batch norm statistics");
    detail::require_dim(t->dim(0), channels, "batch norm statistics length");
  }
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::size_t outer = x.size() / (channels * inner);
  std::vector<double> scale(channels);
  std::vector<double> shift(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (running_var[c] < 0.0f) throw ShapeError("batch norm variance is negative at channel " + std::to_string(c));
    scale[c] = gamma[c] / std::sqrt(static_cast<double>(running_var[c]) + eps);
    shift[c] = beta[c] - running_mean[c] * scale[c];
  }
  Tensor y(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        y[base + i] = static_cast<float>(x[base + i] * scale[c] + shift[c]);
      }
    }
  }
  return y;
}

/// Per-channel affine y = x * scale + shift; batch norm with its running
/// statistics folded into the scale and shift.
inline Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  const Tensor zeros({scale.size()}, 0.0f);
  const Tensor ones({scale.size()}, 1.0f);
  return batch_norm_infer(x, scale, shift, zeros, ones, 0.0);
}

/// Layer normalization over the last axis.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t d = x.dim(x.rank() - 1);
  detail::require_dim(gamma.size(), d, "layer norm weight length");
  detail::require_dim(beta.size(), d, "layer norm bias length");
  Tensor y(x.shape());
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.ptr() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    float* yr = y.ptr() + r * d;
    for (std::size_t i = 0; i < d; ++i) yr[i] = static_cast<float>((xr[i] - mean) * inv * gamma[i] + beta[i]);
  }
  return y;
}

enum class Activation { identity, relu, hardswish, hardsigmoid, sigmoid, gelu, softplus, tanh, silu };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::hardswish: return "hardswish";
    case Activation::hardsigmoid: return "hardsigmoid";
    case Activation::sigmoid: return "sigmoid";
    case Activation::gelu: return "gelu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
    case Activation::silu: return "silu";
  }
  return "?";
}

inline double sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

/// log(1 + e^v) without overflow.
inline double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

inline double apply_activation(Activation kind, double v) {
  switch (kind) {
    case Activation::identity: return v;
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::hardswish: return v * std::clamp(v + 3.0, 0.0, 6.0) / 6.0;
    case Activation::hardsigmoid: return std::clamp(v + 3.0, 0.0, 6.0) / 6.0;
    case Activation::sigmoid: return sigmoid(v);
    case Activation::gelu: return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    case Activation::softplus: return softplus(v);
    case Activation::tanh: return std::tanh(v);
    case Activation::silu: return v * sigmoid(v);
  }
  return v;
}

inline Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(apply_activation(kind, x[i]));
  return y;
}

inline void activation_inplace(Tensor& x, Activation kind) {
  if (kind == Activation::identity) return;
  for (float& v : x.data()) v = static_cast<float>(apply_activation(kind, v));
}

/// Mean over the two trailing spatial axes of [B, C, H, W].
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank(x, 4, "global_avg_pool input");
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor y({x.dim(0), x.dim(1), 1, 1});
  for (std::size_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
    double sum = 0.0;
    const float* p = x.ptr() + bc * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    y[bc] = static_cast<float>(sum / static_cast<double>(plane));
  }
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * s;
  return y;
}

inline Tensor transpose2d(const Tensor& x) {
  detail::require_rank(x, 2, "transpose2d input");
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  }
  return y;
}

/// Columns [begin, begin + count) of a 2-D tensor.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_rank(x, 2, "slice_cols input");
  if (begin + count > x.dim(1) || count == 0) throw ShapeError("slice_cols range out of bounds");
  Tensor y({x.dim(0), count});
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    std::copy_n(x.ptr() + r * x.dim(1) + begin, count, y.ptr() + r * count);
  }
  return y;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat_cols lhs");
  detail::require_rank(b, 2, "concat_cols rhs");
  detail::require_dim(b.dim(0), a.dim(0), "concat_cols row count");
  const std::size_t ca = a.dim(1);
  const std::size_t cb = b.dim(1);
  Tensor y({a.dim(0), ca + cb});
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    std::copy_n(a.ptr() + r * ca, ca, y.ptr() + r * (ca + cb));
    std::copy_n(b.ptr() + r * cb, cb, y.ptr() + r * (ca + cb) + ca);
  }
  return y;
}

/// Reverse the row order of a 2-D tensor (time reversal for [T, D]).
inline Tensor reverse_rows(const Tensor& x) {
  detail::require_rank(x, 2, "reverse_rows input");
  const std::size_t t = x.dim(0);
  const std::size_t d = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < t; ++r) std::copy_n(x.ptr() + (t - 1 - r) * d, d, y.ptr() + r * d);
  return y;
}

/// 1-D convolution over the time axis of a [T, Cin] sequence with weights
/// [Cout, Cin/groups, k] and symmetric zero padding `pad` on both ends.
inline Tensor conv1d_time(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t dilation,
                          std::size_t pad, std::size_t groups = 1) {
  detail::require_rank(x, 2, "conv1d input");
  detail::require_rank(w, 3, "conv1d weight");
  const std::size_t t = x.dim(0);
  const std::size_t cin = x.dim(1);
  ConvSpec spec;
  spec.in_channels = cin;
  spec.out_channels = w.dim(0);
  spec.kernel = {1, w.dim(2)};
  spec.padding = {0, pad};
  spec.dilation = {1, dilation};
  spec.groups = groups;
  const Tensor x4 = transpose2d(x).reshaped({1, cin, 1, t});
  const Tensor w4 = w.reshaped({w.dim(0), w.dim(1), 1, w.dim(2)});
  Tensor y4 = conv2d(x4, w4, bias, spec);
  const std::size_t len = y4.dim(3);
  return transpose2d(std::move(y4).reshaped({spec.out_channels, len}));
}

}  // namespace fmnsed
