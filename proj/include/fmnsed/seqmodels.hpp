#pragma once

// Sequence models operating on [T, D] frame sequences. Every block is
// pre-norm residual: x + mixer(layer_norm(x)).

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "fmnsed/kernels.hpp"
#include "fmnsed/scan.hpp"
#include "fmnsed/weights.hpp"

namespace fmnsed {

enum class SeqKind { none, tf, att, bigru, tcn, mamba, hybrid };

inline std::string_view seq_kind_name(SeqKind k) {
  switch (k) {
    case SeqKind::none: return "NONE";
    case SeqKind::tf: return "TF";
    case SeqKind::att: return "ATT";
    case SeqKind::bigru: return "BIGRU";
    case SeqKind::tcn: return "TCN";
    case SeqKind::mamba: return "MAMBA";
    case SeqKind::hybrid: return "HYBRID";
  }
  return "?";
}

inline std::optional<SeqKind> parse_seq_kind(std::string_view s) {
  for (SeqKind k : {SeqKind::none, SeqKind::tf, SeqKind::att, SeqKind::bigru, SeqKind::tcn, SeqKind::mamba,
                    SeqKind::hybrid}) {
    if (s == seq_kind_name(k)) return k;
  }
  return std::nullopt;
}

struct SeqConfig {
  SeqKind kind = SeqKind::none;
  std::size_t hidden_dim = 256;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 0;  ///< 0 selects max(1, hidden/64), reduced until it divides hidden into even head dims
  std::size_t state_dim = 64;
  std::size_t tcn_kernel = 3;
  std::size_t tcn_layers = 5;
  std::size_t mamba_expand = 2;
  std::size_t mamba_conv = 4;
  std::size_t mamba_headdim = 64;
  std::size_t scan_chunk = 64;

  bool uses_attention() const { return kind == SeqKind::tf || kind == SeqKind::att || kind == SeqKind::hybrid; }

  std::size_t heads() const {
    if (num_heads != 0) return num_heads;
    std::size_t h = std::max<std::size_t>(1, hidden_dim / 64);
    while (h > 1 && (hidden_dim % h != 0 || (hidden_dim / h) % 2 != 0)) --h;
    return h;
  }

  std::size_t mamba_inner() const { return mamba_expand * hidden_dim; }
  std::size_t mamba_heads() const {
    const std::size_t inner = mamba_inner();
    return inner % mamba_headdim == 0 ? inner / mamba_headdim : 1;
  }

  void validate() const {
    if (kind == SeqKind::none) return;
    if (hidden_dim == 0) throw ShapeError("sequence model hidden_dim must be >= 1");
    if (num_blocks == 0) throw ShapeError("sequence model needs at least one block");
    if (uses_attention()) {
      const std::size_t h = heads();
      if (hidden_dim % h != 0) {
        throw ShapeError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by " + std::to_string(h) +
                         " heads");
      }
      if ((hidden_dim / h) % 2 != 0) throw ShapeError("attention head dim must be even for rotary embeddings");
    }
    if ((kind == SeqKind::bigru || kind == SeqKind::hybrid) && hidden_dim % 2 != 0) {
      throw ShapeError("hidden_dim must be even for bidirectional recurrences");
    }
    if (kind == SeqKind::tcn && tcn_kernel % 2 == 0) throw ShapeError("TCN kernel must be odd");
  }
};

// ---------------------------------------------------------------------------
// parameter inventory

namespace detail {

inline void add_linear(ParamInventory& inv, const std::string& p, std::size_t dout, std::size_t din,
                       bool bias = true) {
  inv.push_back({p + ".w", {dout, din}, ParamInit::fan_in});
  if (bias) inv.push_back({p + ".b", {dout}, ParamInit::zero});
}

inline void add_norm(ParamInventory& inv, const std::string& p, std::size_t d) {
  inv.push_back({p + ".w", {d}, ParamInit::one});
  inv.push_back({p + ".b", {d}, ParamInit::zero});
}

inline void add_attention(ParamInventory& inv, const std::string& p, std::size_t d) {
  add_linear(inv, p + ".qkv", 3 * d, d);
  add_linear(inv, p + ".out", d, d);
}

inline void add_mingru(ParamInventory& inv, const std::string& p, std::size_t d) {
  for (const char* dir : {".fwd", ".bwd"}) {
    add_linear(inv, p + dir + ".z", d / 2, d);
    add_linear(inv, p + dir + ".h", d / 2, d);
  }
}

}  // namespace detail

inline ParamInventory seq_block_inventory(const SeqConfig& cfg, const std::string& p) {
  ParamInventory inv;
  const std::size_t d = cfg.hidden_dim;
  switch (cfg.kind) {
    case SeqKind::none: break;
    case SeqKind::tf:
      detail::add_norm(inv, p + ".norm", d);
      detail::add_attention(inv, p + ".attn", d);
      detail::add_norm(inv, p + ".norm2", d);
      detail::add_linear(inv, p + ".ffn.fc1", 4 * d, d);
      detail::add_linear(inv, p + ".ffn.fc2", d, 4 * d);
      break;
    case SeqKind::att:
      detail::add_norm(inv, p + ".norm", d);
      detail::add_attention(inv, p + ".attn", d);
      break;
    case SeqKind::bigru: {
      detail::add_norm(inv, p + ".norm", d);
      const std::size_t h = d / 2;
      for (const char* dir : {".fwd", ".bwd"}) {
        const std::string q = p + ".gru" + dir;
        inv.push_back({q + ".w_ih", {3 * h, d}, ParamInit::fan_in});
        inv.push_back({q + ".w_hh", {3 * h, h}, ParamInit::fan_in});
        inv.push_back({q + ".b_ih", {3 * h}, ParamInit::zero});
        inv.push_back({q + ".b_hh", {3 * h}, ParamInit::zero});
      }
      break;
    }
    case SeqKind::tcn:
      detail::add_norm(inv, p + ".norm", d);
      for (std::size_t n = 0; n < cfg.tcn_layers; ++n) {
        const std::string q = p + ".tcn.conv" + std::to_string(n);
        inv.push_back({q + ".w", {d, d, cfg.tcn_kernel}, ParamInit::fan_in});
        inv.push_back({q + ".b", {d}, ParamInit::zero});
      }
      break;
    case SeqKind::mamba: {
      detail::add_norm(inv, p + ".norm", d);
      const std::string q = p + ".mamba";
      const std::size_t inner = cfg.mamba_inner();
      const std::size_t nh = cfg.mamba_heads();
      const std::size_t conv_dim = inner + 2 * cfg.state_dim;
      detail::add_linear(inv, q + ".in_proj", 2 * inner + 2 * cfg.state_dim + nh, d, false);
      inv.push_back({q + ".conv.w", {conv_dim, 1, cfg.mamba_conv}, ParamInit::fan_in});
      inv.push_back({q + ".conv.b", {conv_dim}, ParamInit::zero});
      inv.push_back({q + ".dt_bias", {nh}, ParamInit::ssm_dt_bias});
      inv.push_back({q + ".A_log", {nh}, ParamInit::ssm_a_log});
      inv.push_back({q + ".D", {nh}, ParamInit::one});
      inv.push_back({q + ".norm.w", {inner}, ParamInit::one});
      detail::add_linear(inv, q + ".out_proj", d, inner, false);
      break;
    }
    case SeqKind::hybrid:
      detail::add_norm(inv, p + ".norm", d);
      detail::add_attention(inv, p + ".attn", d);
      detail::add_mingru(inv, p + ".mingru", d);
      detail::add_linear(inv, p + ".out", d, d);
      break;
  }
  return inv;
}

inline ParamInventory seq_inventory(const SeqConfig& cfg, const std::string& prefix = "seq") {
  ParamInventory inv;
  if (cfg.kind == SeqKind::none) return inv;
  for (std::size_t j = 0; j < cfg.num_blocks; ++j) {
    auto block = seq_block_inventory(cfg, prefix + ".block" + std::to_string(j));
    inv.insert(inv.end(), block.begin(), block.end());
  }
  return inv;
}

// ---------------------------------------------------------------------------
// attention

/// Rotary position embedding on [T, heads, head_dim] queries and keys:
/// channel pairs (2i, 2i+1) at position t are rotated by t * 10000^(-2i/head_dim).
inline std::pair<Tensor, Tensor> rotary_embed(const Tensor& q, const Tensor& k, double base = 10000.0) {
  if (q.rank() != 3 || q.shape() != k.shape()) throw ShapeError("rotary_embed expects matching [T, heads, head_dim]");
  const std::size_t T = q.dim(0);
  const std::size_t H = q.dim(1);
  const std::size_t dh = q.dim(2);
  if (dh % 2 != 0) throw ShapeError("rotary_embed needs an even head dim, got " + std::to_string(dh));
  Tensor qo(q.shape());
  Tensor ko(k.shape());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < dh / 2; ++i) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      const double c = std::cos(theta * static_cast<double>(t));
      const double s = std::sin(theta * static_cast<double>(t));
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = (t * H + h) * dh + 2 * i;
        for (auto [src, dst] : {std::pair{&q, &qo}, std::pair{&k, &ko}}) {
          const double a = (*src)[off];
          const double b = (*src)[off + 1];
          (*dst)[off] = static_cast<float>(a * c - b * s);
          (*dst)[off + 1] = static_cast<float>(a * s + b * c);
        }
      }
    }
  }
  return {std::move(qo), std::move(ko)};
}

/// Bidirectional multi-head self-attention with fused qkv and output
/// projections. When `weights_out` is given it receives the [heads, T, T]
/// attention weights.
inline Tensor mhsa(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t num_heads,
                   bool use_rotary = true, Tensor* weights_out = nullptr) {
  detail::require_rank(x, 2, "mhsa input");
  const std::size_t T = x.dim(0);
  const std::size_t D = x.dim(1);
  if (num_heads == 0 || D % num_heads != 0) {
    throw ShapeError("mhsa: dim " + std::to_string(D) + " not divisible by " + std::to_string(num_heads) + " heads");
  }
  const std::size_t dh = D / num_heads;
  const Tensor qkv = linear(x, w.get(p + ".qkv.w", {3 * D, D}), w.get(p + ".qkv.b", {3 * D}));
  Tensor q({T, num_heads, dh});
  Tensor k({T, num_heads, dh});
  Tensor v({T, num_heads, dh});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(qkv.ptr() + t * 3 * D, D, q.ptr() + t * D);
    std::copy_n(qkv.ptr() + t * 3 * D + D, D, k.ptr() + t * D);
    std::copy_n(qkv.ptr() + t * 3 * D + 2 * D, D, v.ptr() + t * D);
  }
  if (use_rotary) std::tie(q, k) = rotary_embed(q, k);

  if (weights_out != nullptr) *weights_out = Tensor({num_heads, T, T});
  Tensor mixed({T, D});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> scores(T);
  std::vector<double> acc(dh);
  for (std::size_t h = 0; h < num_heads; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      const float* qi = q.ptr() + (i * num_heads + h) * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < T; ++j) {
        const float* kj = k.ptr() + (j * num_heads + h) * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += static_cast<double>(qi[c]) * kj[c];
        scores[j] = dot * inv_scale;
        mx = std::max(mx, scores[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < T; ++j) {
        const double a = scores[j] / sum;
        if (weights_out != nullptr) weights_out->at(h, i, j) = static_cast<float>(a);
        const float* vj = v.ptr() + (j * num_heads + h) * dh;
        for (std::size_t c = 0; c < dh; ++c) acc[c] += a * vj[c];
      }
      for (std::size_t c = 0; c < dh; ++c) mixed[i * D + h * dh + c] = static_cast<float>(acc[c]);
    }
  }
  // scores and value mixing: T*T*D multiply-accumulates each
  profiling::record_macs(2ull * T * T * D);
  return linear(mixed, w.get(p + ".out.w", {D, D}), w.get(p + ".out.b", {D}));
}

// ---------------------------------------------------------------------------
// blocks

namespace detail {

inline Tensor block_norm(const Tensor& x, const WeightStore& w, const std::string& p) {
  const std::size_t d = x.dim(1);
  return layer_norm(x, w.get(p + ".w", {d}), w.get(p + ".b", {d}));
}

inline Tensor matvec_rows(const Tensor& w, const std::vector<double>& h, std::size_t row0, std::size_t rows) {
  const std::size_t cols = w.dim(1);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const float* wr = w.ptr() + (row0 + r) * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * h[c];
    out[r] = static_cast<float>(acc);
  }
  profiling::record_macs(static_cast<std::uint64_t>(rows) * cols);
  return out;
}

/// One GRU direction over [T, D] with gate order (r, z, n):
///   r = s(W_ir x + b_ir + W_hr h + b_hr)
///   z = s(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
inline Tensor gru_direction(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t hidden) {
  const std::size_t T = x.dim(0);
  const std::size_t D = x.dim(1);
  const Tensor gates_x = linear(x, w.get(p + ".w_ih", {3 * hidden, D}), w.get(p + ".b_ih", {3 * hidden}));
  const Tensor& w_hh = w.get(p + ".w_hh", {3 * hidden, hidden});
  const Tensor& b_hh = w.get(p + ".b_hh", {3 * hidden});
  Tensor out({T, hidden});
  std::vector<double> h(hidden, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor gh = matvec_rows(w_hh, h, 0, 3 * hidden);
    const float* gx = gates_x.ptr() + t * 3 * hidden;
    for (std::size_t i = 0; i < hidden; ++i) {
      const double r = sigmoid(static_cast<double>(gx[i]) + gh[i] + b_hh[i]);
      const double z = sigmoid(static_cast<double>(gx[hidden + i]) + gh[hidden + i] + b_hh[hidden + i]);
      const double n = std::tanh(static_cast<double>(gx[2 * hidden + i]) + r * (gh[2 * hidden + i] + b_hh[2 * hidden + i]));
      h[i] = (1.0 - z) * n + z * h[i];
      out[t * hidden + i] = static_cast<float>(h[i]);
    }
  }
  return out;
}

/// One minGRU direction: z_t = s(W_z x_t + b_z), c_t = W_h x_t + b_h,
/// h_t = (1 - z_t) h_{t-1} + z_t c_t, evaluated by the log-space scan with
/// log(1 - z) = -softplus(k) and log z = -softplus(-k).
inline Tensor mingru_direction(const Tensor& x, const WeightStore& w, const std::string& p) {
  const std::size_t T = x.dim(0);
  const std::size_t D = x.dim(1);
  const std::size_t hidden = D / 2;
  const Tensor gate = linear(x, w.get(p + ".z.w", {hidden, D}), w.get(p + ".z.b", {hidden}));
  const Tensor cand = linear(x, w.get(p + ".h.w", {hidden, D}), w.get(p + ".h.b", {hidden}));
  Tensor out({T, hidden});
  std::vector<double> log_a(T);
  std::vector<double> b(T);
  for (std::size_t i = 0; i < hidden; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const double k = gate[t * hidden + i];
      log_a[t] = -softplus(k);
      b[t] = std::exp(-softplus(-k)) * cand[t * hidden + i];
    }
    const auto h = linear_recurrence_logspace(log_a, b);
    for (std::size_t t = 0; t < T; ++t) out[t * hidden + i] = static_cast<float>(h[t]);
  }
  return out;
}

}  // namespace detail

/// Bidirectional GRU, D/2 hidden units per direction, outputs [fwd | bwd].
inline Tensor bigru(const Tensor& x, const WeightStore& w, const std::string& p) {
  detail::require_rank(x, 2, "bigru input");
  const std::size_t D = x.dim(1);
  if (D % 2 != 0) throw ShapeError("bigru needs an even feature dim");
  const Tensor fwd = detail::gru_direction(x, w, p + ".fwd", D / 2);
  const Tensor bwd = reverse_rows(detail::gru_direction(reverse_rows(x), w, p + ".bwd", D / 2));
  return concat_cols(fwd, bwd);
}

/// Bidirectional minGRU, D/2 units per direction, outputs [fwd | bwd].
inline Tensor mingru_bidirectional(const Tensor& x, const WeightStore& w, const std::string& p) {
  detail::require_rank(x, 2, "minGRU input");
  if (x.dim(1) % 2 != 0) throw ShapeError("minGRU needs an even feature dim");
  const Tensor fwd = detail::mingru_direction(x, w, p + ".fwd");
  const Tensor bwd = reverse_rows(detail::mingru_direction(reverse_rows(x), w, p + ".bwd"));
  return concat_cols(fwd, bwd);
}

/// Stack of dilated 1-D convolutions, layer n with dilation 2^n and
/// symmetric same-padding, each followed by `act`.
inline Tensor tcn_stack(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t layers,
                        std::size_t kernel, Activation act = Activation::relu) {
  const std::size_t D = x.dim(1);
  Tensor h = x;
  for (std::size_t n = 0; n < layers; ++n) {
    const std::string q = p + ".conv" + std::to_string(n);
    const std::size_t dilation = std::size_t{1} << n;
    h = conv1d_time(h, w.get(q + ".w", {D, D, kernel}), &w.get(q + ".b", {D}), dilation, dilation * (kernel - 1) / 2);
    activation_inplace(h, act);
  }
  return h;
}

/// Mamba-2 mixer: in-projection to (z, x, B, C, dt), causal depthwise conv
/// with SiLU on (x, B, C), chunked selective scan with per-head decay
/// exp(-dt * exp(A_log)), skip D*x, gated RMS norm, out-projection.
inline Tensor mamba2_mixer(const Tensor& x, const WeightStore& w, const std::string& p, const SeqConfig& cfg) {
  const std::size_t T = x.dim(0);
  const std::size_t D = x.dim(1);
  const std::size_t inner = cfg.mamba_expand * D;
  const std::size_t N = cfg.state_dim;
  const std::size_t nh = inner % cfg.mamba_headdim == 0 ? inner / cfg.mamba_headdim : 1;
  const std::size_t P = inner / nh;
  const std::size_t conv_dim = inner + 2 * N;
  const std::size_t K = cfg.mamba_conv;

  const Tensor proj = linear(x, w.get(p + ".in_proj.w", {2 * inner + 2 * N + nh, D}));
  const Tensor z = slice_cols(proj, 0, inner);
  Tensor xbc = slice_cols(proj, inner, conv_dim);
  const Tensor dt_raw = slice_cols(proj, inner + conv_dim, nh);

  // causal: K-1 zero frames in front, no padding at the end
  Tensor padded({T + K - 1, conv_dim});
  std::copy_n(xbc.ptr(), xbc.size(), padded.ptr() + (K - 1) * conv_dim);
  xbc = conv1d_time(padded, w.get(p + ".conv.w", {conv_dim, 1, K}), &w.get(p + ".conv.b", {conv_dim}), 1, 0,
                    conv_dim);
  activation_inplace(xbc, Activation::silu);
  const Tensor xs = slice_cols(xbc, 0, inner);
  const Tensor Bm = slice_cols(xbc, inner, N);
  const Tensor Cm = slice_cols(xbc, inner + N, N);

  const Tensor& dt_bias = w.get(p + ".dt_bias", {nh});
  const Tensor& a_log = w.get(p + ".A_log", {nh});
  const Tensor& d_skip = w.get(p + ".D", {nh});
  Tensor dt({T, nh});
  Tensor log_a({T, nh});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t h = 0; h < nh; ++h) {
      const double step = softplus(static_cast<double>(dt_raw.at(t, h)) + dt_bias[h]);
      dt.at(t, h) = static_cast<float>(step);
      log_a.at(t, h) = static_cast<float>(-step * std::exp(static_cast<double>(a_log[h])));
    }
  }
  Tensor y = selective_scan_chunked(xs, dt, log_a, Bm, Cm, nh, cfg.scan_chunk);

  const Tensor& norm_w = w.get(p + ".norm.w", {inner});
  for (std::size_t t = 0; t < T; ++t) {
    double ss = 0.0;
    for (std::size_t c = 0; c < inner; ++c) {
      const double zv = z[t * inner + c];
      const double v = (y[t * inner + c] + static_cast<double>(d_skip[c / P]) * xs[t * inner + c]) * zv * sigmoid(zv);
      y[t * inner + c] = static_cast<float>(v);
      ss += v * v;
    }
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(inner) + 1e-5);
    for (std::size_t c = 0; c < inner; ++c) y[t * inner + c] = static_cast<float>(y[t * inner + c] * inv * norm_w[c]);
  }
  return linear(y, w.get(p + ".out_proj.w", {D, inner}));
}

inline Tensor tf_block(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t heads) {
  profiling::record_call("tf_block");
  const std::size_t D = x.dim(1);
  Tensor h = add(x, mhsa(detail::block_norm(x, w, p + ".norm"), w, p + ".attn", heads));
  Tensor f = linear(detail::block_norm(h, w, p + ".norm2"), w.get(p + ".ffn.fc1.w", {4 * D, D}),
                    w.get(p + ".ffn.fc1.b", {4 * D}));
  activation_inplace(f, Activation::gelu);
  f = linear(f, w.get(p + ".ffn.fc2.w", {D, 4 * D}), w.get(p + ".ffn.fc2.b", {D}));
  return add(h, f);
}

inline Tensor att_block(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t heads) {
  profiling::record_call("att_block");
  return add(x, mhsa(detail::block_norm(x, w, p + ".norm"), w, p + ".attn", heads));
}

inline Tensor bigru_block(const Tensor& x, const WeightStore& w, const std::string& p) {
  profiling::record_call("bigru_block");
  return add(x, bigru(detail::block_norm(x, w, p + ".norm"), w, p + ".gru"));
}

inline Tensor tcn_block(const Tensor& x, const WeightStore& w, const std::string& p, const SeqConfig& cfg) {
  profiling::record_call("tcn_block");
  return add(x, tcn_stack(detail::block_norm(x, w, p + ".norm"), w, p + ".tcn", cfg.tcn_layers, cfg.tcn_kernel));
}

inline Tensor mamba2_block(const Tensor& x, const WeightStore& w, const std::string& p, const SeqConfig& cfg) {
  profiling::record_call("mamba2_block");
  return add(x, mamba2_mixer(detail::block_norm(x, w, p + ".norm"), w, p + ".mamba", cfg));
}

/// x + out((mhsa(n) + minGRU(n)) / 2) with n = layer_norm(x).
inline Tensor hybrid_block(const Tensor& x, const WeightStore& w, const std::string& p, std::size_t heads) {
  profiling::record_call("hybrid_block");
  const std::size_t D = x.dim(1);
  const Tensor n = detail::block_norm(x, w, p + ".norm");
  const Tensor avg = scale(add(mhsa(n, w, p + ".attn", heads), mingru_bidirectional(n, w, p + ".mingru")), 0.5f);
  return add(x, linear(avg, w.get(p + ".out.w", {D, D}), w.get(p + ".out.b", {D})));
}

/// Applies cfg.num_blocks blocks of the configured kind; NONE is the identity.
inline Tensor run_sequence_model(const SeqConfig& cfg, const WeightStore& w, const Tensor& x,
                                 const std::string& prefix = "seq") {
  if (cfg.kind == SeqKind::none) return x;
  cfg.validate();
  detail::require_rank(x, 2, "sequence model input");
  detail::require_dim(x.dim(1), cfg.hidden_dim, "sequence model input feature dim");
  Tensor h = x;
  for (std::size_t j = 0; j < cfg.num_blocks; ++j) {
    const std::string p = prefix + ".block" + std::to_string(j);
    switch (cfg.kind) {
      case SeqKind::tf: h = tf_block(h, w, p, cfg.heads()); break;
      case SeqKind::att: h = att_block(h, w, p, cfg.heads()); break;
      case SeqKind::bigru: h = bigru_block(h, w, p); break;
      case SeqKind::tcn: h = tcn_block(h, w, p, cfg); break;
      case SeqKind::mamba: h = mamba2_block(h, w, p, cfg); break;
      case SeqKind::hybrid: h = hybrid_block(h, w, p, cfg.heads()); break;
      case SeqKind::none: break;
    }
  }
  return h;
}

}  // namespace fmnsed
