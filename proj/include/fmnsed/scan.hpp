#pragma once

// Parallel-form evaluation of first-order linear recurrences.
//
// * inclusive_scan_blocked: three-phase blocked scan (local scans, carry
//   scan over block totals, carry fix-up) for any associative operator.
// * linear_recurrence_logspace: h_t = a_t h_{t-1} + b_t, h_{-1} = 0, from
//   log a_t, evaluated as exp(A_t) * sum_{s<=t} b_s exp(-A_s) with
//   A_t = cumsum(log a) and the sum taken as a log-cum-sum-exp over the
//   positive and negative parts of b separately.
// * selective_scan_chunked: multi-head scalar-decay state-space scan in
//   chunked form (quadratic within a chunk, state passing between chunks).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fmnsed/profiling.hpp"
#include "fmnsed/tensor.hpp"
#include "fmnsed/threading.hpp"

namespace fmnsed {

template <typename T, typename Op>
void inclusive_scan_blocked(std::span<T> data, Op op, std::size_t block = 64, std::size_t threads = 1) {
  const std::size_t n = data.size();
  if (n == 0) return;
  block = std::max<std::size_t>(block, 1);
  const std::size_t nblocks = (n + block - 1) / block;

  parallel_for(nblocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * block;
    const std::size_t hi = std::min(n, lo + block);
    for (std::size_t i = lo + 1; i < hi; ++i) data[i] = op(data[i - 1], data[i]);
  });

  // carry[b] = fold of every element before block b
  std::vector<T> carry(nblocks);
  for (std::size_t b = 1; b < nblocks; ++b) {
    const T& total = data[std::min(n, b * block) - 1];
    carry[b] = b == 1 ? total : op(carry[b - 1], total);
  }

  parallel_for(nblocks, threads, [&](std::size_t b) {
    if (b == 0) return;
    const std::size_t lo = b * block;
    const std::size_t hi = std::min(n, lo + block);
    for (std::size_t i = lo; i < hi; ++i) data[i] = op(carry[b], data[i]);
  });
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// h_t = a_t h_{t-1} + b_t with h_{-1} = 0, given log a_t (may be -inf) and b_t.
inline std::vector<double> linear_recurrence_logspace(std::span<const double> log_a, std::span<const double> b,
                                                      std::size_t block = 64) {
  const std::size_t n = log_a.size();
  if (b.size() != n) throw ShapeError("linear_recurrence_logspace: coefficient lengths differ");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // A zero decay (log a = -inf) discards the past: evaluate each segment that
  // starts at one separately, with that first decay irrelevant (set to 1).
  std::vector<double> la(log_a.begin(), log_a.end());
  std::vector<double> h(n);
  std::size_t seg_begin = 0;
  while (seg_begin < n) {
    std::size_t seg_end = seg_begin + 1;
    while (seg_end < n && la[seg_end] != kNegInf) ++seg_end;
    const std::size_t len = seg_end - seg_begin;
    std::vector<double> cum(la.begin() + static_cast<std::ptrdiff_t>(seg_begin),
                            la.begin() + static_cast<std::ptrdiff_t>(seg_end));
    cum[0] = cum[0] == kNegInf ? 0.0 : cum[0];
    inclusive_scan_blocked<double>(cum, [](double x, double y) { return x + y; }, block);

    std::vector<double> pos(len);
    std::vector<double> neg(len);
    for (std::size_t t = 0; t < len; ++t) {
      const double v = b[seg_begin + t];
      const double mag = std::log(std::abs(v)) - cum[t];
      pos[t] = v > 0.0 ? mag : kNegInf;
      neg[t] = v < 0.0 ? mag : kNegInf;
    }
    inclusive_scan_blocked<double>(pos, log_add_exp, block);
    inclusive_scan_blocked<double>(neg, log_add_exp, block);
    for (std::size_t t = 0; t < len; ++t) {
      h[seg_begin + t] = std::exp(cum[t] + pos[t]) - std::exp(cum[t] + neg[t]);
    }
    seg_begin = seg_end;
  }
  return h;
}

/// Scalar-decay selective scan, per head h and channel p:
///   S_t = a_t S_{t-1} + dt_t * x_t B_t^T,   y_t = S_t C_t,   S_{-1} = 0
/// with a_t = exp(log_a_t). x: [T, heads * P], dt/log_a: [T, heads],
/// B/C: [T, N] shared by all heads. Returns y: [T, heads * P].
inline Tensor selective_scan_chunked(const Tensor& x, const Tensor& dt, const Tensor& log_a, const Tensor& B,
                                     const Tensor& C, std::size_t heads, std::size_t chunk = 64) {
  const std::size_t T = x.dim(0);
  const std::size_t N = B.dim(1);
  if (heads == 0 || x.dim(1) % heads != 0) throw ShapeError("selective scan: channels not divisible by heads");
  if (dt.shape() != Shape{T, heads} || log_a.shape() != Shape{T, heads}) {
    throw ShapeError("selective scan: dt/log_a must be [T, heads]");
  }
  if (B.shape() != Shape{T, N} || C.shape() != Shape{T, N}) throw ShapeError("selective scan: B/C must be [T, N]");
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t P = x.dim(1) / heads;
  const std::size_t width = x.dim(1);

  Tensor y({T, width});
  std::vector<double> cb(chunk * chunk);
  std::vector<double> decay(chunk * chunk);
  std::vector<double> from_start(chunk);  // sum of log_a over [c0, c0+i]
  std::vector<double> to_end(chunk);      // sum of log_a over (c0+j, end]
  std::vector<double> state(heads * P * N, 0.0);
  std::vector<double> next(P * N);

  for (std::size_t c0 = 0; c0 < T; c0 += chunk) {
    const std::size_t len = std::min(chunk, T - c0);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t n = 0; n < N; ++n) dot += static_cast<double>(C.at(c0 + i, n)) * B.at(c0 + j, n);
        cb[i * chunk + j] = dot;
      }
    }
    for (std::size_t h = 0; h < heads; ++h) {
      // decay[i][j] = prod_{r=j+1..i} a_r, summed in log space right to left
      for (std::size_t i = 0; i < len; ++i) {
        double run = 0.0;
        for (std::size_t j = i + 1; j-- > 0;) {
          decay[i * chunk + j] = std::exp(run);
          run += log_a.at(c0 + j, h);
        }
        from_start[i] = run;
      }
      {
        double run = 0.0;
        for (std::size_t j = len; j-- > 0;) {
          to_end[j] = run;
          run += log_a.at(c0 + j, h);
        }
      }
      double* S = state.data() + h * P * N;
      for (std::size_t i = 0; i < len; ++i) {
        const double carry = std::exp(from_start[i]);
        for (std::size_t p = 0; p < P; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= i; ++j) {
            acc += cb[i * chunk + j] * decay[i * chunk + j] * dt.at(c0 + j, h) * x.at(c0 + j, h * P + p);
          }
          if (carry != 0.0) {
            double sc = 0.0;
            for (std::size_t n = 0; n < N; ++n) sc += S[p * N + n] * C.at(c0 + i, n);
            acc += carry * sc;
          }
          y.at(c0 + i, h * P + p) = static_cast<float>(acc);
        }
      }
      const double keep = std::exp(from_start[len - 1]);
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t n = 0; n < N; ++n) next[p * N + n] = keep * S[p * N + n];
      }
      for (std::size_t j = 0; j < len; ++j) {
        const double w = std::exp(to_end[j]) * dt.at(c0 + j, h);
        if (w == 0.0) continue;
        for (std::size_t p = 0; p < P; ++p) {
          const double xv = w * x.at(c0 + j, h * P + p);
          for (std::size_t n = 0; n < N; ++n) next[p * N + n] += xv * B.at(c0 + j, n);
        }
      }
      std::copy(next.begin(), next.end(), S);
    }
  }
  // state update plus read-out, one multiply-accumulate each per state element
  profiling::record_macs(2ull * T * width * N);
  return y;
}

}  // namespace fmnsed
