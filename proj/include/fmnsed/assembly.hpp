#pragma once

// Full frame-wise model:  logits_t = W_h f(W_d z_t + b_d) + b_h  for the
// 250 backbone frames z_t. Without a sequence model f and (W_d, b_d) are
// dropped and the head maps embeddings straight to classes.

#include <charconv>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmnsed/backbone.hpp"
#include "fmnsed/seqmodels.hpp"
#include "fmnsed/threading.hpp"

namespace fmnsed {

inline constexpr std::size_t kTrainClasses = 447;
inline constexpr std::size_t kEvalClasses = 407;

struct ModelSpec {
  FmnConfig fmn = build_fmn(1.0);
  SeqConfig seq;
  std::size_t num_classes = kTrainClasses;

  void validate() const {
    if (num_classes == 0) throw ShapeError("num_classes must be >= 1");
    if (seq.kind != SeqKind::none && seq.hidden_dim == 0) throw ShapeError("sequence hidden_dim must be >= 1");
    validate_fmn(fmn);
    seq.validate();
  }

  /// Width of the features reaching the classification head.
  std::size_t head_input_dim() const { return seq.kind == SeqKind::none ? fmn.embed_channels : seq.hidden_dim; }
};

inline constexpr std::array<double, 5> kAlphaGrid{0.4, 0.6, 1.0, 2.0, 3.0};

/// Hidden width tied to the backbone width: 256 at alpha = 1.
inline std::size_t hidden_from_alpha(double alpha) { return make_divisible(256.0 * alpha); }

inline ModelSpec make_model_spec(double alpha, SeqKind kind = SeqKind::none, std::size_t hidden = 256,
                                 std::size_t num_classes = kTrainClasses) {
  ModelSpec spec;
  spec.fmn = build_fmn(alpha);
  spec.seq.kind = kind;
  spec.seq.hidden_dim = hidden;
  spec.num_classes = num_classes;
  spec.validate();
  return spec;
}

/// `fmn{04|06|10|20|30}[+KIND:hidden]`, e.g. "fmn10+TF:256".
inline std::optional<ModelSpec> parse_model_name(std::string_view name) {
  if (name.size() < 5 || name.substr(0, 3) != "fmn") return std::nullopt;
  const std::string_view digits = name.substr(3, 2);
  int tenths = 0;
  if (std::from_chars(digits.data(), digits.data() + 2, tenths).ptr != digits.data() + 2) return std::nullopt;
  double alpha = 0.0;
  bool on_grid = false;
  for (double a : kAlphaGrid) {
    if (std::lround(a * 10) == tenths) {
      alpha = a;
      on_grid = true;
    }
  }
  if (!on_grid) return std::nullopt;
  std::string_view rest = name.substr(5);
  SeqKind kind = SeqKind::none;
  std::size_t hidden = 256;
  if (!rest.empty()) {
    if (rest.front() != '+') return std::nullopt;
    rest.remove_prefix(1);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    const auto k = parse_seq_kind(rest.substr(0, colon));
    if (!k || *k == SeqKind::none) return std::nullopt;
    kind = *k;
    const std::string_view h = rest.substr(colon + 1);
    if (h.empty() || h.front() == '0') return std::nullopt;
    const auto res = std::from_chars(h.data(), h.data() + h.size(), hidden);
    if (res.ec != std::errc{} || res.ptr != h.data() + h.size() || hidden == 0) return std::nullopt;
  }
  try {
    return make_model_spec(alpha, kind, hidden);
  } catch (const ShapeError&) {
    return std::nullopt;
  }
}

inline std::string model_name(const ModelSpec& spec) {
  const long tenths = std::lround(spec.fmn.alpha * 10);
  std::string name = "fmn";
  if (tenths < 10) name += '0';
  name += std::to_string(tenths);
  if (spec.seq.kind != SeqKind::none) {
    name += '+';
    name += seq_kind_name(spec.seq.kind);
    name += ':' + std::to_string(spec.seq.hidden_dim);
  }
  return name;
}

/// Every parameter the model reads, in a fixed order.
inline ParamInventory model_inventory(const ModelSpec& spec) {
  ParamInventory inv = fmn_inventory(spec.fmn);
  if (spec.seq.kind != SeqKind::none) {
    detail::add_linear(inv, "proj", spec.seq.hidden_dim, spec.fmn.embed_channels);
    auto seq = seq_inventory(spec.seq);
    inv.insert(inv.end(), seq.begin(), seq.end());
  }
  inv.push_back({"head.w", {spec.num_classes, spec.head_input_dim()}, ParamInit::fan_in});
  inv.push_back({"head.b", {spec.num_classes}, ParamInit::head_bias});
  return inv;
}

inline WeightStore random_model_weights(const ModelSpec& spec, std::uint64_t seed) {
  return random_weights(model_inventory(spec), seed);
}

/// Frame logits [250, num_classes] for one [1, 128, 1000] log-mel clip.
inline Tensor forward_full(const ModelSpec& spec, const WeightStore& w, const Tensor& mel) {
  const Tensor z = forward_fmn(spec.fmn, w, mel);
  Tensor frames = transpose2d(z);
  if (spec.seq.kind != SeqKind::none) {
    const std::size_t e = spec.fmn.embed_channels;
    const std::size_t d = spec.seq.hidden_dim;
    frames = linear(frames, w.get("proj.w", {d, e}), w.get("proj.b", {d}));
    frames = run_sequence_model(spec.seq, w, frames);
  }
  const std::size_t din = spec.head_input_dim();
  return linear(frames, w.get("head.w", {spec.num_classes, din}), w.get("head.b", {spec.num_classes}));
}

inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

inline Tensor predict_probs(const ModelSpec& spec, const WeightStore& w, const Tensor& mel) {
  return sigmoid(forward_full(spec, w, mel));
}

/// Gathers the given strictly increasing column indices of [T, C] scores.
inline Tensor select_eval_classes(const Tensor& probs, std::span<const std::size_t> columns) {
  detail::require_rank(probs, 2, "select_eval_classes input");
  if (columns.empty()) throw ShapeError("select_eval_classes: empty class mask");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] >= probs.dim(1)) {
      throw ShapeError("class index " + std::to_string(columns[i]) + " out of range for " +
                       std::to_string(probs.dim(1)) + " classes");
    }
    if (i > 0 && columns[i] <= columns[i - 1]) throw ShapeError("class mask must be strictly increasing");
  }
  Tensor out({probs.dim(0), columns.size()});
  for (std::size_t t = 0; t < probs.dim(0); ++t) {
    for (std::size_t j = 0; j < columns.size(); ++j) out.at(t, j) = probs.at(t, columns[j]);
  }
  return out;
}

/// Frame probabilities for many clips, evaluated in parallel. Results are
/// identical to calling predict_probs per clip.
inline std::vector<Tensor> predict_batch(const ModelSpec& spec, const WeightStore& w, std::span<const Tensor> mels,
                                         std::size_t threads = worker_threads()) {
  std::vector<Tensor> out(mels.size());
  parallel_for(mels.size(), threads, [&](std::size_t i) { out[i] = predict_probs(spec, w, mels[i]); });
  return out;
}

}  // namespace fmnsed
