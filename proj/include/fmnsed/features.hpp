#pragma once

// Log-mel frontend: 10 s mono audio -> [1, 128, 1000].

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fmnsed/backbone.hpp"
#include "fmnsed/error.hpp"
#include "fmnsed/tensor.hpp"

namespace fmnsed {

struct MelConfig {
  double sample_rate = 32000.0;
  std::size_t n_fft = 1024;
  std::size_t win_length = 800;
  std::size_t hop_length = 320;
  std::size_t n_mels = kMelBins;
  double f_min = 0.0;
  double f_max = 16000.0;
  double clip_seconds = 10.0;
  double log_eps = 1e-5;

  std::size_t clip_samples() const { return static_cast<std::size_t>(std::llround(clip_seconds * sample_rate)); }
  std::size_t frames() const { return clip_samples() / hop_length; }
  std::size_t n_bins() const { return n_fft / 2 + 1; }

  void validate() const {
    if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
      throw ShapeError("mel config needs 0 <= f_min < f_max <= sample_rate/2");
    }
    if (win_length > n_fft || hop_length == 0 || n_mels == 0) throw ShapeError("invalid STFT/mel sizes");
  }
};

/// Zero-pads or truncates to exactly one clip.
inline std::vector<float> fit_clip(std::span<const float> audio, const MelConfig& cfg) {
  std::vector<float> out(cfg.clip_samples(), 0.0f);
  std::copy_n(audio.begin(), std::min(audio.size(), out.size()), out.begin());
  return out;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Periodic Hann window of win_length, centred in n_fft zeros.
inline std::vector<double> padded_hann(const MelConfig& cfg) {
  std::vector<double> w(cfg.n_fft, 0.0);
  const std::size_t left = (cfg.n_fft - cfg.win_length) / 2;
  for (std::size_t i = 0; i < cfg.win_length; ++i) {
    w[left + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(cfg.win_length));
  }
  return w;
}

inline std::size_t reflect_index(std::int64_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::int64_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::int64_t>(n) ? i : period - i);
}

}  // namespace detail

/// Hann-windowed, centred (reflect-padded) STFT magnitude [n_fft/2+1, frames].
/// The centred transform yields one frame more than a clip holds; the
/// trailing frame is dropped so a 10 s clip gives exactly 1000.
inline Tensor stft_magnitude(std::span<const float> audio, const MelConfig& cfg = {}) {
  cfg.validate();
  if (audio.empty()) throw DataError("stft: empty audio");
  const std::vector<float> clip = fit_clip(audio, cfg);
  const std::size_t frames = cfg.frames();
  const std::size_t bins = cfg.n_bins();
  const auto window = detail::padded_hann(cfg);
  const auto half = static_cast<std::int64_t>(cfg.n_fft / 2);

  std::vector<double> in(cfg.n_fft);
  std::vector<std::complex<double>> out(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(cfg.n_fft), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  Tensor mag({bins, frames});
  for (std::size_t f = 0; f < frames; ++f) {
    const auto start = static_cast<std::int64_t>(f * cfg.hop_length) - half;
    for (std::size_t i = 0; i < cfg.n_fft; ++i) {
      in[i] = window[i] * clip[detail::reflect_index(start + static_cast<std::int64_t>(i), clip.size())];
    }
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) mag.at(k, f) = static_cast<float>(std::abs(out[k]));
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return mag;
}

inline double hz_to_mel_slaney(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz_slaney(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

/// Edge frequencies (n_mels + 2 of them) of the triangular filters.
inline std::vector<double> mel_edges_hz(const MelConfig& cfg) {
  const double lo = hz_to_mel_slaney(cfg.f_min);
  const double hi = hz_to_mel_slaney(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz_slaney(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  return edges;
}

/// Unnormalised triangular filters on the Slaney mel scale, peak value 1 at
/// each centre frequency: [n_mels, n_fft/2+1].
inline Tensor mel_filterbank(const MelConfig& cfg = {}) {
  cfg.validate();
  const auto edges = mel_edges_hz(cfg);
  const std::size_t bins = cfg.n_bins();
  Tensor fb({cfg.n_mels, bins});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m];
    const double mid = edges[m + 1];
    const double hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb.at(m, k) = static_cast<float>(std::max(0.0, std::min(up, down)));
    }
  }
  return fb;
}

/// log(mel power + eps) as [1, n_mels, frames].
inline Tensor log_mel(std::span<const float> audio, const MelConfig& cfg = {}) {
  const Tensor mag = stft_magnitude(audio, cfg);
  const Tensor fb = mel_filterbank(cfg);
  const std::size_t bins = cfg.n_bins();
  const std::size_t frames = mag.dim(1);
  std::vector<double> power(bins);
  Tensor out({1, cfg.n_mels, frames});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double m = mag.at(k, f);
      power[k] = m * m;
    }
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const float* row = fb.ptr() + m * bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) acc += row[k] * power[k];
      out.at(0, m, f) = static_cast<float>(std::log(acc + cfg.log_eps));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// WAV input

struct Audio {
  std::vector<float> samples;  ///< mono, nominally in [-1, 1]
  double sample_rate = 0.0;
};

namespace detail {

inline std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}
inline std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

}  // namespace detail

/// Parses a RIFF/WAVE buffer holding 16-bit PCM or 32-bit float samples.
/// Multi-channel audio is averaged to mono.
inline Audio decode_wav(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "RIFF" ||
      std::string(buf.begin() + 8, buf.begin() + 12) != "WAVE") {
    throw DataError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::size_t len = detail::le32(&buf[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > buf.size() && id != "data") throw DataError("truncated WAV chunk '" + id + "'");
    if (id == "fmt ") {
      if (len < 16) throw DataError("short WAV fmt chunk");
      format = detail::le16(&buf[body]);
      channels = detail::le16(&buf[body + 2]);
      rate = detail::le32(&buf[body + 4]);
      bits = detail::le16(&buf[body + 14]);
      if (format == 0xFFFE && len >= 26) format = detail::le16(&buf[body + 24]);  // WAVE_FORMAT_EXTENSIBLE
    } else if (id == "data") {
      data = &buf[body];
      data_len = std::min(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw DataError("WAV file has no usable fmt chunk");
  if (data == nullptr) throw DataError("WAV file has no data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw DataError("unsupported WAV encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                    " bits); expected 16-bit PCM or 32-bit float");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  Audio a;
  a.sample_rate = rate;
  a.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      sum += pcm16 ? static_cast<std::int16_t>(detail::le16(p)) / 32768.0
                   : static_cast<double>(std::bit_cast<float>(detail::le32(p)));
    }
    a.samples[i] = static_cast<float>(sum / channels);
  }
  return a;
}

inline Audio load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open audio file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// Linear-interpolation resampling.
inline std::vector<float> resample_linear(std::span<const float> in, double from_rate, double to_rate) {
  if (from_rate == to_rate || in.empty()) return {in.begin(), in.end()};
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(in.size()) * to_rate / from_rate));
  std::vector<float> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double src = static_cast<double>(i) * from_rate / to_rate;
    const auto j = static_cast<std::size_t>(src);
    const double frac = src - static_cast<double>(j);
    const double a = in[std::min(j, in.size() - 1)];
    const double b = in[std::min(j + 1, in.size() - 1)];
    out[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

/// Test and fixture helper: mono 16-bit PCM WAV bytes.
inline std::vector<std::uint8_t> encode_wav_pcm16(std::span<const float> samples, std::uint32_t rate) {
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(16);
  put16(1);
  put16(1);
  put32(rate);
  put32(rate * 2);
  put16(2);
  put16(16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(data_len);
  for (float s : samples) {
    const long q = std::lround(static_cast<double>(std::clamp(s, -1.0f, 1.0f)) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L));
    put16(static_cast<std::uint16_t>(v));
  }
  return out;
}

}  // namespace fmnsed
