#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fmnsed/psds.hpp"
#include "oracles/events.hpp"

using namespace fmnsed;

namespace {

constexpr double kFs = 0.2;  // 50 frames per 10 s clip
constexpr std::size_t kFrames = 50;

EventList to_events(const std::string& id, const oracle::Clip& clip) {
  EventList l{id, {}};
  for (const auto& e : clip) l.events.push_back({e.cls, e.first * kFs, e.end * kFs});
  return l;
}

oracle::Clip runs_to_clip(const std::vector<oracle::Run>& runs) {
  oracle::Clip c;
  for (const auto& r : runs) c.push_back({r.cls, static_cast<long>(r.first), static_cast<long>(r.end)});
  return c;
}

struct Instance {
  std::vector<EventList> gts;
  std::vector<OperatingPoint> points;
  oracle::ClipSet gt_oracle;
  std::vector<oracle::ClipSet> det_oracle;
  std::size_t classes = 0;
};

/// Random frame-aligned instance: ground truth from a binary grid, detections
/// from a noisy score grid decoded at several thresholds.
Instance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Instance in;
  in.classes = 2 + seed % 4;
  const std::size_t clips = 10 + seed % 30;
  std::vector<double> ths;
  for (double t = 0.1; t < 0.95; t += 0.1 + 0.05 * static_cast<double>(seed % 3)) ths.push_back(t);
  in.det_oracle.resize(ths.size());
  for (std::size_t i = 0; i < ths.size(); ++i) in.points.push_back({ths[i], {}});
  for (std::size_t k = 0; k < clips; ++k) {
    const std::string id = "clip" + std::to_string(k);
    Tensor truth({kFrames, in.classes}, 0.0f);
    Tensor score({kFrames, in.classes}, 0.0f);
    for (std::size_t c = 0; c < in.classes; ++c) {
      bool on = u(rng) < 0.3f;
      for (std::size_t t = 0; t < kFrames; ++t) {
        if (u(rng) < 0.1f) on = !on;
        truth.at(t, c) = on ? 1.0f : 0.0f;
        score.at(t, c) = std::clamp((on ? 0.65f : 0.25f) + 0.5f * (u(rng) - 0.5f) + 0.3f * (u(rng) < 0.05f), 0.0f, 1.0f);
      }
    }
    const oracle::Clip g = runs_to_clip(oracle::rle(truth, 0.5f));
    in.gt_oracle[id] = g;
    in.gts.push_back(to_events(id, g));
    for (std::size_t i = 0; i < ths.size(); ++i) {
      const oracle::Clip d = runs_to_clip(oracle::rle(score, static_cast<float>(ths[i])));
      in.det_oracle[i][id] = d;
      in.points[i].detections.push_back(to_events(id, d));
    }
  }
  return in;
}

double score(const Instance& in, const PsdsParams& p = {}) {
  return score_operating_points(in.points, in.gts, in.classes, p).psds1;
}

}  // namespace

TEST(IntersectionCounts, CriteriaOnHandExamples) {
  const std::vector<EventList> gt{{"a", {{0, 0.0, 10.0}, {1, 2.0, 4.0}}}};
  // covers 60% of the ground truth: valid detection, but not a true positive
  std::vector<EventList> det{{"a", {{0, 0.0, 6.0}}}};
  auto k = intersection_counts(det, gt, 2);
  EXPECT_EQ(k[0], (ClassCounts{0, 0, 1}));
  EXPECT_EQ(k[1], (ClassCounts{0, 0, 1}));
  // 80% coverage of class 0 and a detection spilling 50% outside class 1
  det = {{"a", {{0, 1.0, 9.0}, {1, 3.0, 5.0}}}};
  k = intersection_counts(det, gt, 2);
  EXPECT_EQ(k[0], (ClassCounts{1, 0, 1}));
  EXPECT_EQ(k[1], (ClassCounts{0, 1, 1}));
  // exactly 70% on both sides is enough
  det = {{"a", {{1, 2.0, 3.4}, {0, 3.0, 10.0}}}};
  k = intersection_counts(det, gt, 2);
  EXPECT_EQ(k[0], (ClassCounts{1, 0, 1}));
  EXPECT_EQ(k[1], (ClassCounts{1, 0, 1}));
  // two fragments jointly covering a ground-truth event
  det = {{"a", {{0, 0.0, 4.0}, {0, 4.0, 7.5}}}};
  EXPECT_EQ(intersection_counts(det, gt, 2)[0], (ClassCounts{1, 0, 1}));
  // detections in a clip without ground truth are false positives
  det = {{"b", {{1, 0.0, 1.0}}}};
  EXPECT_EQ(intersection_counts(det, gt, 2)[1], (ClassCounts{0, 1, 1}));
}

TEST(IntersectionCounts, RejectsBadInput) {
  const std::vector<EventList> gt{{"a", {{0, 0.0, 1.0}}}};
  EXPECT_THROW(intersection_counts(std::vector<EventList>{{"a", {{5, 0.0, 1.0}}}}, gt, 2), DataError);
  EXPECT_THROW(intersection_counts(std::vector<EventList>{{"a", {}}, {"a", {}}}, gt, 2), DataError);
}

TEST(Psds, PerfectDetectorScoresOne) {
  const Instance in = random_instance(1);
  std::vector<OperatingPoint> pts;
  for (double t : {0.2, 0.5, 0.8}) pts.push_back({t, in.gts});
  EXPECT_NEAR(score_operating_points(pts, in.gts, in.classes).psds1, 1.0, 1e-12);
}

TEST(Psds, EmptyDetectorScoresZero) {
  const Instance in = random_instance(2);
  std::vector<OperatingPoint> pts;
  for (double t : {0.2, 0.5}) {
    OperatingPoint op{t, {}};
    for (const auto& g : in.gts) op.detections.push_back({g.clip_id, {}});
    pts.push_back(op);
  }
  EXPECT_EQ(score_operating_points(pts, in.gts, in.classes).psds1, 0.0);
}

TEST(Psds, ConstantCurveGivesItsHeight) {
  const std::vector<RocPoint> roc{{0.0, {0.5, 0.5, 0.5}}};
  EXPECT_DOUBLE_EQ(psds_score(roc), 0.5);
  // std penalty: {0, 1} has mean 0.5 and population std 0.5
  const std::vector<RocPoint> spread{{0.0, {0.0, 1.0}}};
  EXPECT_DOUBLE_EQ(psds_score(spread), 0.0);
  EXPECT_DOUBLE_EQ(psds_score(spread, 0.0), 0.5);
  // starts at 50 FP/h: half the range counts
  const std::vector<RocPoint> late{{50.0, {1.0}}};
  EXPECT_DOUBLE_EQ(psds_score(late), 0.5);
}

TEST(Psds, MatchesBruteForceOracleOn20Instances) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const Instance in = random_instance(seed);
    const double got = score(in);
    const double want = oracle::psds(in.det_oracle, in.gt_oracle, in.classes);
    EXPECT_NEAR(got, want, 1e-9) << "seed " << seed;
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Psds, CountsMatchFrameOracle) {
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    const Instance in = random_instance(seed);
    for (std::size_t i = 0; i < in.points.size(); ++i) {
      const auto got = intersection_counts(in.points[i].detections, in.gts, in.classes);
      const auto want = oracle::count(in.det_oracle[i], in.gt_oracle, in.classes);
      for (std::size_t c = 0; c < in.classes; ++c) {
        ASSERT_EQ(static_cast<long>(got[c].tp), want.tp[c]);
        ASSERT_EQ(static_cast<long>(got[c].fp), want.fp[c]);
        ASSERT_EQ(static_cast<long>(got[c].gt), want.gt[c]);
      }
    }
  }
}

TEST(Psds, ZeroStdPenaltyIsMeanPerClassAuc) {
  for (std::uint64_t seed = 300; seed < 305; ++seed) {
    const Instance in = random_instance(seed);
    PsdsParams p;
    p.alpha_st = 0.0;
    const PsdsResult r = score_operating_points(in.points, in.gts, in.classes, p);
    double mean = 0.0;
    for (double a : r.per_class_auc) mean += a;
    mean /= static_cast<double>(r.per_class_auc.size());
    EXPECT_NEAR(r.psds1, mean, 1e-12);
  }
}

TEST(Psds, InvariantToClassAndClipPermutation) {
  for (std::uint64_t seed = 400; seed < 405; ++seed) {
    Instance in = random_instance(seed);
    const double before = score(in);
    std::vector<std::size_t> perm(in.classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto remap = [&](std::vector<EventList>& lists) {
      for (auto& l : lists) {
        for (auto& e : l.events) e.class_index = perm[e.class_index];
      }
      std::reverse(lists.begin(), lists.end());
    };
    remap(in.gts);
    for (auto& op : in.points) remap(op.detections);
    std::reverse(in.points.begin(), in.points.end());
    EXPECT_NEAR(score(in), before, 1e-12);
  }
}

TEST(Psds, AddingFalsePositivesNeverHelps) {
  for (std::uint64_t seed = 500; seed < 510; ++seed) {
    Instance in = random_instance(seed);
    const double before = score(in);
    // one spurious event of an extra class that has no ground truth
    ++in.classes;
    for (auto& op : in.points) op.detections[seed % op.detections.size()].events.push_back({in.classes - 1, 1.0, 2.0});
    EXPECT_LE(score(in), before + 1e-12);
  }
}

TEST(Psds, RocIsSortedAndMonotone) {
  const Instance in = random_instance(600);
  const PsdRoc roc = build_psd_roc(in.points, in.gts, in.classes);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    EXPECT_LT(roc.points[i - 1].efpr, roc.points[i].efpr);
    for (std::size_t k = 0; k < roc.classes.size(); ++k) {
      EXPECT_LE(roc.points[i - 1].tpr_per_class[k], roc.points[i].tpr_per_class[k]);
    }
  }
}

TEST(Psds, DuplicateThresholdsRejected) {
  const Instance in = random_instance(7);
  std::vector<OperatingPoint> pts{in.points[0], in.points[0]};
  EXPECT_THROW(build_psd_roc(pts, in.gts, in.classes), ShapeError);
}

TEST(ThresholdGrid, FiftyEvenlySpacedValues) {
  const auto g = threshold_grid();
  ASSERT_EQ(g.size(), 50u);
  EXPECT_DOUBLE_EQ(g.front(), 0.01);
  EXPECT_DOUBLE_EQ(g.back(), 0.99);
  EXPECT_NEAR(g[1] - g[0], 0.02, 1e-12);
}

TEST(EvaluatePsds1, PaintedGroundTruthScoresOne) {
  std::mt19937_64 rng(8);
  std::vector<EventList> gts;
  std::vector<ClipProbs> clips;
  for (int k = 0; k < 6; ++k) {
    EventList l{"c" + std::to_string(k), {}};
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t a = rng() % 100;
      const std::size_t b = a + 20 + rng() % 100;
      l.events.push_back({c, a * kFrameSeconds, b * kFrameSeconds});
    }
    clips.push_back({l.clip_id, encode_events(l, 250, 3)});
    gts.push_back(std::move(l));
  }
  const auto th = threshold_grid();
  EXPECT_NEAR(evaluate_psds1(clips, gts, th).psds1, 1.0, 1e-12);
  for (auto& c : clips) c.probs = Tensor(c.probs.shape(), 0.0f);
  EXPECT_EQ(evaluate_psds1(clips, gts, th).psds1, 0.0);
}
