#pragma once

// Parameter and MAC accounting plus wall-clock throughput.
//
// MAC convention: convolutions (Cin/groups)*kh*kw*Cout*H'*W', linear layers
// Din*Dout per frame, attention projections plus T*T*D each for the scores
// and the value mixing, recurrent and scan updates by their matrix products
// only. Activations, normalisation, softmax, gating and other point-wise
// products and sums count as zero.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fmnsed/assembly.hpp"

namespace fmnsed {

inline std::uint64_t count_params(const ModelSpec& spec) { return inventory_floats(model_inventory(spec)); }

namespace detail {

inline std::uint64_t conv_macs(std::size_t cin, std::size_t cout, std::size_t k, std::size_t groups, Hw out) {
  return static_cast<std::uint64_t>(cin / groups) * k * k * cout * out.h * out.w;
}

inline Hw strided(Hw in, std::size_t k, Stride2 s) {
  ConvSpec spec;
  spec.kernel = {k, k};
  spec.stride = {s.freq, s.time};
  spec.padding = {(k - 1) / 2, (k - 1) / 2};
  return spec.output_size(in);
}

inline std::uint64_t attention_macs(std::uint64_t T, std::uint64_t d) { return 4 * d * d * T + 2 * T * T * d; }

}  // namespace detail

/// Backbone MACs and its output grid for a [1, 128, frames] input.
inline std::pair<std::uint64_t, Hw> count_fmn_macs(const FmnConfig& cfg, Hw in) {
  std::uint64_t macs = 0;
  Hw hw = detail::strided(in, 3, cfg.stem_stride);
  macs += detail::conv_macs(1, cfg.stem_channels, 3, 1, hw);
  for (const auto& b : cfg.blocks) {
    if (b.has_expand()) macs += detail::conv_macs(b.in_channels, b.expansion_channels, 1, 1, hw);
    hw = detail::strided(hw, b.kernel, b.stride);
    macs += detail::conv_macs(b.expansion_channels, b.expansion_channels, b.kernel, b.expansion_channels, hw);
    if (b.use_se) macs += 2ull * b.expansion_channels * b.se_channels();
    macs += detail::conv_macs(b.expansion_channels, b.out_channels, 1, 1, hw);
  }
  const std::size_t last = cfg.blocks.empty() ? cfg.stem_channels : cfg.blocks.back().out_channels;
  macs += detail::conv_macs(last, cfg.embed_channels, 1, 1, hw);
  return {macs, hw};
}

/// MACs of the sequence model alone on T frames.
inline std::uint64_t count_seq_macs(const SeqConfig& cfg, std::uint64_t T) {
  const std::uint64_t d = cfg.hidden_dim;
  std::uint64_t per_block = 0;
  switch (cfg.kind) {
    case SeqKind::none: return 0;
    case SeqKind::tf: per_block = detail::attention_macs(T, d) + 8 * d * d * T; break;
    case SeqKind::att: per_block = detail::attention_macs(T, d); break;
    case SeqKind::bigru: {
      const std::uint64_t h = d / 2;
      per_block = 2 * T * 3 * (d * h + h * h);
      break;
    }
    case SeqKind::tcn: per_block = cfg.tcn_layers * cfg.tcn_kernel * d * d * T; break;
    case SeqKind::mamba: {
      const std::uint64_t inner = cfg.mamba_inner();
      const std::uint64_t n = cfg.state_dim;
      const std::uint64_t conv_dim = inner + 2 * n;
      per_block = d * (2 * inner + 2 * n + cfg.mamba_heads()) * T + conv_dim * cfg.mamba_conv * T +
                  2 * T * inner * n + inner * d * T;
      break;
    }
    case SeqKind::hybrid: {
      const std::uint64_t h = d / 2;
      per_block = detail::attention_macs(T, d) + 2 * 2 * d * h * T + d * d * T;
      break;
    }
  }
  return per_block * cfg.num_blocks;
}

/// Analytic MACs of one forward pass on an input of shape [1, 128, frames].
inline std::uint64_t count_macs(const ModelSpec& spec, const Shape& input_shape = {1, kMelBins, kInputFrames}) {
  if (input_shape.size() != 3 || input_shape[0] != 1) throw ShapeError("count_macs expects a [1, F, T] input shape");
  const auto [backbone, hw] = count_fmn_macs(spec.fmn, {input_shape[1], input_shape[2]});
  const std::uint64_t T = static_cast<std::uint64_t>(hw.h) * hw.w;
  std::uint64_t macs = backbone;
  if (spec.seq.kind != SeqKind::none) {
    macs += static_cast<std::uint64_t>(spec.fmn.embed_channels) * spec.seq.hidden_dim * T;
    macs += count_seq_macs(spec.seq, T);
  }
  macs += static_cast<std::uint64_t>(spec.head_input_dim()) * spec.num_classes * T;
  return macs;
}

struct ComplexityReport {
  std::string config_name;
  double alpha = 1.0;
  std::string kind = "NONE";
  std::size_t hidden = 0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  double throughput = 0.0;  ///< clips per second, 0 when not measured
  std::size_t batch_size = 0;
  std::size_t threads = 0;
  std::string hardware = "-";
};

inline ComplexityReport profile_model(const ModelSpec& spec) {
  ComplexityReport r;
  r.config_name = model_name(spec);
  r.alpha = spec.fmn.alpha;
  r.kind = std::string(seq_kind_name(spec.seq.kind));
  r.hidden = spec.seq.kind == SeqKind::none ? 0 : spec.seq.hidden_dim;
  r.params = count_params(spec);
  r.macs = count_macs(spec);
  return r;
}

inline constexpr const char* kComplexityCsvHeader = "name,alpha,kind,hidden,params,macs,throughput,batch,threads,hardware";

inline std::string csv_row(const ComplexityReport& r) {
  std::string hw = r.hardware;
  std::replace(hw.begin(), hw.end(), ',', ';');
  std::ostringstream os;
  os << r.config_name << ',' << r.alpha << ',' << r.kind << ',' << r.hidden << ',' << r.params << ',' << r.macs << ',';
  os.setf(std::ios::fixed);
  os.precision(3);
  os << r.throughput << ',' << r.batch_size << ',' << r.threads << ',' << hw;
  return os.str();
}

inline std::string hardware_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return cpu + " x" + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " fp32";
}

struct BenchResult {
  double clips_per_second = 0.0;
  std::vector<double> per_iteration;  ///< clips per second of each timed iteration
  std::size_t batch_size = 0;
  std::size_t threads = 0;
  std::string hardware;
};

/// Median clips/second over `timed_iters` batches of random log-mel inputs.
inline BenchResult bench_throughput(const ModelSpec& spec, const WeightStore& w, std::size_t batch_size = 64,
                                    std::size_t warmup_iters = 1, std::size_t timed_iters = 3,
                                    std::size_t threads = worker_threads()) {
  if (timed_iters < 3) throw ShapeError("bench_throughput needs at least 3 timed iterations");
  if (batch_size == 0) throw ShapeError("bench_throughput needs a positive batch size");
  std::mt19937 rng(1234);
  std::normal_distribution<float> dist(-4.0f, 2.0f);
  std::vector<Tensor> batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    Tensor mel({1, kMelBins, kInputFrames});
    for (float& v : mel.data()) v = dist(rng);
    batch.push_back(std::move(mel));
  }
  for (std::size_t i = 0; i < warmup_iters; ++i) (void)predict_batch(spec, w, batch, threads);
  BenchResult r;
  r.batch_size = batch_size;
  r.threads = threads;
  r.hardware = hardware_descriptor();
  for (std::size_t i = 0; i < timed_iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)predict_batch(spec, w, batch, threads);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    r.per_iteration.push_back(static_cast<double>(batch_size) / std::max(dt.count(), 1e-9));
  }
  std::vector<double> sorted = r.per_iteration;
  std::sort(sorted.begin(), sorted.end());
  r.clips_per_second = sorted[sorted.size() / 2];
  return r;
}

}  // namespace fmnsed
