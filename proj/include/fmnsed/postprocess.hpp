#pragma once

// Median filtering of frame probabilities and decoding into timed events.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fmnsed/backbone.hpp"
#include "fmnsed/error.hpp"
#include "fmnsed/tensor.hpp"

namespace fmnsed {

struct Event {
  std::size_t class_index = 0;
  double onset = 0.0;   ///< seconds
  double offset = 0.0;  ///< seconds

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventList {
  std::string clip_id;
  std::vector<Event> events;

  friend bool operator==(const EventList&, const EventList&) = default;
};

inline bool event_order(const Event& a, const Event& b) {
  if (a.class_index != b.class_index) return a.class_index < b.class_index;
  if (a.onset != b.onset) return a.onset < b.onset;
  return a.offset < b.offset;
}

inline void sort_events(EventList& list) { std::sort(list.events.begin(), list.events.end(), event_order); }

/// Throws DataError on events that are empty, inverted or leave [0, clip_seconds],
/// or on overlapping events of the same class.
inline void validate_events(const EventList& list, double clip_seconds = 10.0) {
  constexpr double kSlack = 1e-9;
  std::vector<Event> ev = list.events;
  std::sort(ev.begin(), ev.end(), event_order);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const Event& e = ev[i];
    if (!std::isfinite(e.onset) || !std::isfinite(e.offset) || e.onset < 0.0 || e.offset <= e.onset ||
        e.offset > clip_seconds + kSlack) {
      throw DataError("clip '" + list.clip_id + "': malformed event [" + std::to_string(e.onset) + ", " +
                      std::to_string(e.offset) + ") of class " + std::to_string(e.class_index));
    }
    if (i > 0 && ev[i - 1].class_index == e.class_index && e.onset < ev[i - 1].offset) {
      throw DataError("clip '" + list.clip_id + "': overlapping events of class " + std::to_string(e.class_index));
    }
  }
}

/// Per-column median over a centred window truncated at the sequence ends.
/// An even number of valid frames takes the lower median.
inline Tensor median_filter(const Tensor& probs, std::size_t window) {
  detail::require_rank(probs, 2, "median_filter input");
  if (window == 0 || window % 2 == 0) {
    throw ShapeError("median window must be odd and >= 1, got " + std::to_string(window));
  }
  const std::size_t T = probs.dim(0);
  const std::size_t C = probs.dim(1);
  const std::size_t half = window / 2;
  Tensor out({T, C});
  std::vector<float> buf;
  buf.reserve(window);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = t >= half ? t - half : 0;
      const std::size_t hi = std::min(T, t + half + 1);
      buf.clear();
      for (std::size_t s = lo; s < hi; ++s) buf.push_back(probs.at(s, c));
      const std::size_t k = (buf.size() - 1) / 2;
      std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k), buf.end());
      out.at(t, c) = buf[k];
    }
  }
  return out;
}

namespace detail {

inline void check_threshold(float t) {
  if (!(t > 0.0f && t < 1.0f)) throw ShapeError("decode threshold must lie in (0, 1), got " + std::to_string(t));
}

}  // namespace detail

/// Maximal runs of frames with prob >= threshold[c] become events
/// [first * frame_seconds, (last + 1) * frame_seconds).
inline EventList decode_events(const Tensor& probs, std::span<const float> thresholds,
                               double frame_seconds = kFrameSeconds, std::string clip_id = {}) {
  detail::require_rank(probs, 2, "decode_events input");
  const std::size_t T = probs.dim(0);
  const std::size_t C = probs.dim(1);
  if (thresholds.size() != C) {
    throw ShapeError("decode_events: " + std::to_string(thresholds.size()) + " thresholds for " + std::to_string(C) +
                     " classes");
  }
  for (float t : thresholds) detail::check_threshold(t);
  EventList list;
  list.clip_id = std::move(clip_id);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t t = 0;
    while (t < T) {
      if (probs.at(t, c) < thresholds[c]) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < T && probs.at(t, c) >= thresholds[c]) ++t;
      list.events.push_back({c, static_cast<double>(start) * frame_seconds, static_cast<double>(t) * frame_seconds});
    }
  }
  return list;
}

inline EventList decode_events(const Tensor& probs, float threshold, double frame_seconds = kFrameSeconds,
                               std::string clip_id = {}) {
  detail::require_rank(probs, 2, "decode_events input");
  const std::vector<float> per_class(probs.dim(1), threshold);
  return decode_events(probs, per_class, frame_seconds, std::move(clip_id));
}

/// Paints events onto a [frames, classes] grid: 1 on every frame whose
/// interval [i*fs, (i+1)*fs) intersects an event, 0 elsewhere.
inline Tensor encode_events(const EventList& list, std::size_t frames, std::size_t classes,
                            double frame_seconds = kFrameSeconds) {
  Tensor grid({frames, classes}, 0.0f);
  for (const Event& e : list.events) {
    if (e.class_index >= classes) {
      throw ShapeError("encode_events: class " + std::to_string(e.class_index) + " outside " +
                       std::to_string(classes) + " classes");
    }
    // Rounding guards frame-aligned times against representation error.
    const double first = std::floor(e.onset / frame_seconds + 1e-6);
    const double last = std::ceil(e.offset / frame_seconds - 1e-6);
    const auto lo = static_cast<std::size_t>(std::max(0.0, first));
    const auto hi = static_cast<std::size_t>(std::min(static_cast<double>(frames), last));
    for (std::size_t t = lo; t < hi; ++t) grid.at(t, e.class_index) = 1.0f;
  }
  return grid;
}

}  // namespace fmnsed
