#pragma once

// Polyphonic sound detection score (PSDS1 parameter set, no cross-trigger
// cost) from detections at many operating points.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fmnsed/postprocess.hpp"
#include "fmnsed/threading.hpp"

namespace fmnsed {

struct PsdsParams {
  double dtc = 0.7;
  double gtc = 0.7;
  double alpha_st = 1.0;
  double e_max = 100.0;  ///< false positives per hour
  double clip_seconds = 10.0;
};

struct ClassCounts {
  std::size_t tp = 0;  ///< ground-truth events detected
  std::size_t fp = 0;  ///< invalid detections
  std::size_t gt = 0;  ///< ground-truth events

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct OperatingPoint {
  double threshold = 0.5;
  std::vector<EventList> detections;
};

struct RocPoint {
  double efpr = 0.0;
  std::vector<double> tpr_per_class;
};

/// Curve plus the class indices its TPR columns refer to.
struct PsdRoc {
  std::vector<std::size_t> classes;
  std::vector<RocPoint> points;  ///< ascending efpr, per-class TPR non-decreasing
};

namespace detail {

inline double overlap(const Event& a, const Event& b) {
  return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

inline std::map<std::string, const EventList*> index_clips(std::span<const EventList> lists, const char* what) {
  std::map<std::string, const EventList*> out;
  for (const auto& l : lists) {
    if (!out.emplace(l.clip_id, &l).second) {
      throw DataError(std::string(what) + ": clip '" + l.clip_id + "' listed twice");
    }
  }
  return out;
}

}  // namespace detail

/// Per-class detection counts under the dtc/gtc intersection criteria.
inline std::vector<ClassCounts> intersection_counts(std::span<const EventList> dets, std::span<const EventList> gts,
                                                    std::size_t num_classes, const PsdsParams& p = {}) {
  const auto gt_by_clip = detail::index_clips(gts, "ground truth");
  const auto det_by_clip = detail::index_clips(dets, "detections");
  std::vector<ClassCounts> counts(num_classes);
  auto check_class = [&](const Event& e, const std::string& clip) {
    if (e.class_index >= num_classes) {
      throw DataError("clip '" + clip + "': class index " + std::to_string(e.class_index) + " outside vocabulary of " +
                      std::to_string(num_classes));
    }
  };
  for (const auto& [clip, gt] : gt_by_clip) {
    validate_events(*gt, p.clip_seconds);
    for (const auto& e : gt->events) {
      check_class(e, clip);
      ++counts[e.class_index].gt;
    }
  }
  // Absorbs representation error when an overlap ratio sits exactly on a criterion.
  constexpr double kTol = 1e-9;
  static const EventList kNone;
  for (const auto& [clip, det] : det_by_clip) {
    validate_events(*det, p.clip_seconds);
    const auto it = gt_by_clip.find(clip);
    const EventList& gt = it == gt_by_clip.end() ? kNone : *it->second;
    std::vector<const Event*> valid;
    for (const auto& d : det->events) {
      check_class(d, clip);
      double inter = 0.0;
      for (const auto& g : gt.events) {
        if (g.class_index == d.class_index) inter += detail::overlap(d, g);
      }
      if (inter >= p.dtc * (d.offset - d.onset) - kTol) {
        valid.push_back(&d);
      } else {
        ++counts[d.class_index].fp;
      }
    }
    for (const auto& g : gt.events) {
      double inter = 0.0;
      for (const Event* d : valid) {
        if (d->class_index == g.class_index) inter += detail::overlap(*d, g);
      }
      if (inter >= p.gtc * (g.offset - g.onset) - kTol) ++counts[g.class_index].tp;
    }
  }
  return counts;
}

/// Total audio duration in hours: every clip named in the ground truth or in
/// any detection set counts once.
inline double audio_hours(std::span<const OperatingPoint> points, std::span<const EventList> gts,
                          double clip_seconds) {
  std::set<std::string> clips;
  for (const auto& g : gts) clips.insert(g.clip_id);
  for (const auto& op : points) {
    for (const auto& d : op.detections) clips.insert(d.clip_id);
  }
  return static_cast<double>(clips.size()) * clip_seconds / 3600.0;
}

/// One ROC point per operating point: TPR_c = TP_c / |GT_c| and
/// eFPR = (total FP) / audio hours. Points are sorted by eFPR and each class
/// curve is made non-decreasing by a running maximum; operating points with
/// equal eFPR merge. Classes scored are those with ground truth or with any
/// detection; a class without ground truth has TPR 0.
inline PsdRoc build_psd_roc(std::span<const OperatingPoint> points, std::span<const EventList> gts,
                            std::size_t num_classes, const PsdsParams& p = {},
                            std::size_t threads = worker_threads()) {
  if (points.empty()) throw ShapeError("build_psd_roc needs at least one operating point");
  {
    std::vector<double> th;
    for (const auto& op : points) th.push_back(op.threshold);
    std::sort(th.begin(), th.end());
    if (std::adjacent_find(th.begin(), th.end()) != th.end()) throw ShapeError("operating point thresholds must be unique");
  }
  const double hours = audio_hours(points, gts, p.clip_seconds);
  if (!(hours > 0.0)) throw DataError("PSDS needs at least one clip");

  std::vector<std::vector<ClassCounts>> counts(points.size());
  parallel_for(points.size(), threads,
               [&](std::size_t i) { counts[i] = intersection_counts(points[i].detections, gts, num_classes, p); });

  PsdRoc roc;
  std::vector<char> used(num_classes, 0);
  for (const auto& per_point : counts) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (per_point[c].gt > 0 || per_point[c].fp > 0 || per_point[c].tp > 0) used[c] = 1;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (used[c]) roc.classes.push_back(c);
  }

  std::vector<RocPoint> raw;
  for (const auto& per_point : counts) {
    RocPoint r;
    std::size_t fp = 0;
    for (std::size_t c : roc.classes) {
      const auto& k = per_point[c];
      fp += k.fp;
      r.tpr_per_class.push_back(k.gt == 0 ? 0.0 : static_cast<double>(k.tp) / static_cast<double>(k.gt));
    }
    r.efpr = static_cast<double>(fp) / hours;
    raw.push_back(std::move(r));
  }
  std::stable_sort(raw.begin(), raw.end(), [](const RocPoint& a, const RocPoint& b) { return a.efpr < b.efpr; });

  std::vector<double> best(roc.classes.size(), 0.0);
  for (const auto& r : raw) {
    for (std::size_t k = 0; k < best.size(); ++k) best[k] = std::max(best[k], r.tpr_per_class[k]);
    if (!roc.points.empty() && roc.points.back().efpr == r.efpr) {
      roc.points.back().tpr_per_class = best;
    } else {
      roc.points.push_back({r.efpr, best});
    }
  }
  return roc;
}

namespace detail {

/// (1/e_max) * integral over [0, e_max] of a step curve taking value v[i] on
/// [efpr_i, efpr_{i+1}), 0 before the first point and v.back() up to e_max.
inline double normalized_step_area(std::span<const RocPoint> pts, std::span<const double> v, double e_max) {
  double area = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double lo = std::min(pts[i].efpr, e_max);
    const double hi = i + 1 < pts.size() ? std::min(pts[i + 1].efpr, e_max) : e_max;
    area += v[i] * (hi - lo);
  }
  return area / e_max;
}

}  // namespace detail

/// Effective TPR max(0, mean_c TPR_c - alpha_st * std_c TPR_c) integrated
/// over eFPR in [0, e_max] and normalised by e_max.
inline double psds_score(std::span<const RocPoint> roc, double alpha_st = 1.0, double e_max = 100.0) {
  if (roc.empty()) throw ShapeError("psds_score needs a non-empty ROC");
  if (!(e_max > 0.0)) throw ShapeError("psds_score: e_max must be positive");
  std::vector<double> etpr;
  for (const auto& r : roc) {
    const auto& t = r.tpr_per_class;
    if (t.empty()) {
      etpr.push_back(0.0);
      continue;
    }
    double mean = 0.0;
    for (double x : t) mean += x;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double x : t) var += (x - mean) * (x - mean);
    var /= static_cast<double>(t.size());
    etpr.push_back(std::max(0.0, mean - alpha_st * std::sqrt(var)));
  }
  return std::clamp(detail::normalized_step_area(roc, etpr, e_max), 0.0, 1.0);
}

/// Normalised area under each class curve, in PsdRoc::classes order.
inline std::vector<double> per_class_auc(const PsdRoc& roc, double e_max = 100.0) {
  std::vector<double> out;
  std::vector<double> col(roc.points.size());
  for (std::size_t k = 0; k < roc.classes.size(); ++k) {
    for (std::size_t i = 0; i < roc.points.size(); ++i) col[i] = roc.points[i].tpr_per_class[k];
    out.push_back(detail::normalized_step_area(roc.points, col, e_max));
  }
  return out;
}

/// n evenly spaced thresholds from lo to hi inclusive.
inline std::vector<double> threshold_grid(std::size_t n = 50, double lo = 0.01, double hi = 0.99) {
  if (n == 0) throw ShapeError("threshold grid needs at least one value");
  if (n == 1) return {lo};
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

struct PsdsResult {
  double psds1 = 0.0;
  std::vector<std::size_t> classes;
  std::vector<double> per_class_auc;
  PsdRoc roc;
};

inline PsdsResult score_operating_points(std::span<const OperatingPoint> points, std::span<const EventList> gts,
                                         std::size_t num_classes, const PsdsParams& p = {}) {
  PsdsResult r;
  r.roc = build_psd_roc(points, gts, num_classes, p);
  r.psds1 = psds_score(r.roc.points, p.alpha_st, p.e_max);
  r.classes = r.roc.classes;
  r.per_class_auc = per_class_auc(r.roc, p.e_max);
  return r;
}

struct ClipProbs {
  std::string clip_id;
  Tensor probs;  ///< [T, num_classes]
};

/// Median filter each clip once, decode at every threshold, then score.
inline PsdsResult evaluate_psds1(std::span<const ClipProbs> clips, std::span<const EventList> gts,
                                 std::span<const double> thresholds, std::size_t median_window = 9,
                                 const PsdsParams& p = {}, double frame_seconds = kFrameSeconds) {
  if (clips.empty()) throw DataError("evaluate_psds1: no clips");
  const std::size_t num_classes = clips.front().probs.dim(1);
  std::vector<Tensor> filtered(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].probs.rank() != 2 || clips[i].probs.dim(1) != num_classes) {
      throw ShapeError("evaluate_psds1: clip '" + clips[i].clip_id + "' has an inconsistent class count");
    }
    filtered[i] = median_filter(clips[i].probs, median_window);
  }
  std::vector<OperatingPoint> points;
  for (double th : thresholds) {
    OperatingPoint op;
    op.threshold = th;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      op.detections.push_back(decode_events(filtered[i], static_cast<float>(th), frame_seconds, clips[i].clip_id));
    }
    points.push_back(std::move(op));
  }
  return score_operating_points(points, gts, num_classes, p);
}

}  // namespace fmnsed
