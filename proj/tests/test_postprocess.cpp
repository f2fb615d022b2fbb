#include <gtest/gtest.h>

#include <random>

#include "fmnsed/kernels.hpp"
#include "fmnsed/postprocess.hpp"
#include "oracles/events.hpp"
#include "oracles/naive_kernels.hpp"

using namespace fmnsed;

namespace {

/// Grid with long runs and isolated flips, so both filters and decoders have work.
Tensor blocky_grid(std::mt19937_64& rng, std::size_t T, std::size_t C) {
  Tensor x({T, C});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t c = 0; c < C; ++c) {
    float level = u(rng);
    for (std::size_t t = 0; t < T; ++t) {
      if (u(rng) < 0.08f) level = u(rng);
      x.at(t, c) = u(rng) < 0.1f ? u(rng) : level;
    }
  }
  return x;
}

}  // namespace

TEST(MedianFilter, MatchesSortOracleOn100Grids) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const std::size_t T = 1 + rng() % 260;
    const std::size_t C = 1 + rng() % 6;
    const std::size_t window = 2 * (rng() % 8) + 1;
    const Tensor x = blocky_grid(rng, T, C);
    ASSERT_EQ(median_filter(x, window), oracle::median_sorted(x, window)) << "grid " << i;
  }
}

TEST(MedianFilter, WindowOneIsIdentityAndConstantsAreFixed) {
  std::mt19937_64 rng(32);
  const Tensor x = blocky_grid(rng, 50, 3);
  EXPECT_EQ(median_filter(x, 1), x);
  const Tensor k({40, 2}, 0.37f);
  EXPECT_EQ(median_filter(k, 9), k);
}

TEST(MedianFilter, RemovesShortSpikes) {
  Tensor x({30, 1}, 0.1f);
  x.at(12, 0) = 0.9f;
  x.at(20, 0) = 0.95f;
  x.at(21, 0) = 0.95f;
  const Tensor y = median_filter(x, 5);
  for (std::size_t t = 0; t < 30; ++t) EXPECT_EQ(y.at(t, 0), 0.1f);
}

TEST(MedianFilter, RejectsEvenOrZeroWindows) {
  const Tensor x({10, 2}, 0.5f);
  for (std::size_t w : {0, 2, 8, 10}) EXPECT_THROW(median_filter(x, w), ShapeError) << w;
}

TEST(MedianFilter, CommutesWithMonotoneMaps) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 20; ++i) {
    const Tensor logits = oracle::random_tensor({120, 4}, rng, -6.0f, 6.0f);
    const Tensor a = activation(median_filter(logits, 9), Activation::sigmoid);
    const Tensor b = median_filter(activation(logits, Activation::sigmoid), 9);
    ASSERT_EQ(a, b);
  }
}

TEST(DecodeEvents, MatchesRunLengthOracleOn100Grids) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<float> th(0.05f, 0.95f);
  for (int i = 0; i < 100; ++i) {
    const std::size_t T = 1 + rng() % 260;
    const std::size_t C = 1 + rng() % 5;
    const Tensor x = blocky_grid(rng, T, C);
    const float t = th(rng);
    const EventList got = decode_events(x, t, 0.04);
    const auto runs = oracle::rle(x, t);
    ASSERT_EQ(got.events.size(), runs.size()) << "grid " << i;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      EXPECT_EQ(got.events[k].class_index, runs[k].cls);
      EXPECT_NEAR(got.events[k].onset, 0.04 * runs[k].first, 1e-12);
      EXPECT_NEAR(got.events[k].offset, 0.04 * runs[k].end, 1e-12);
    }
  }
}

TEST(DecodeEvents, SingleRunBecomesOneEvent) {
  Tensor p({250, 5}, 0.1f);
  for (std::size_t t = 10; t < 20; ++t) p.at(t, 3) = 0.8f;
  const EventList ev = decode_events(p, 0.5f, 0.04, "clip");
  ASSERT_EQ(ev.events.size(), 1u);
  EXPECT_EQ(ev.events[0].class_index, 3u);
  EXPECT_NEAR(ev.events[0].onset, 0.40, 1e-12);
  EXPECT_NEAR(ev.events[0].offset, 0.80, 1e-12);
  EXPECT_EQ(ev.clip_id, "clip");
}

TEST(DecodeEvents, ThresholdIsInclusiveAndValidated) {
  Tensor p({4, 1}, 0.5f);
  EXPECT_EQ(decode_events(p, 0.5f, 0.04).events.size(), 1u);
  EXPECT_THROW(decode_events(p, 0.0f), ShapeError);
  EXPECT_THROW(decode_events(p, 1.0f), ShapeError);
  const std::vector<float> two{0.5f, 0.5f};
  EXPECT_THROW(decode_events(p, two), ShapeError);
}

TEST(EncodeDecode, RoundTripsInBothDirections) {
  std::mt19937_64 rng(35);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = blocky_grid(rng, 250, 4);
    const EventList ev = decode_events(x, 0.5f, 0.04);
    const Tensor grid = encode_events(ev, 250, 4, 0.04);
    for (std::size_t k = 0; k < x.size(); ++k) ASSERT_EQ(grid[k], x[k] >= 0.5f ? 1.0f : 0.0f);
    EXPECT_EQ(decode_events(grid, 0.5f, 0.04), ev);
  }
}

TEST(EncodeEvents, PaintsPartiallyCoveredFrames) {
  EventList ev{"c", {{1, 0.05, 0.13}}};
  const Tensor g = encode_events(ev, 10, 2, 0.04);
  for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(g.at(t, 1), (t >= 1 && t <= 3) ? 1.0f : 0.0f) << t;
  EXPECT_THROW(encode_events({"c", {{2, 0.0, 0.1}}}, 10, 2), ShapeError);
}

TEST(ValidateEvents, RejectsMalformedLists) {
  EXPECT_NO_THROW(validate_events({"c", {{0, 0.0, 1.0}, {0, 1.0, 2.0}, {1, 0.5, 10.0}}}));
  EXPECT_THROW(validate_events({"c", {{0, 1.0, 1.0}}}), DataError);
  EXPECT_THROW(validate_events({"c", {{0, -0.1, 1.0}}}), DataError);
  EXPECT_THROW(validate_events({"c", {{0, 9.0, 10.5}}}), DataError);
  EXPECT_THROW(validate_events({"c", {{0, 0.0, 2.0}, {0, 1.0, 3.0}}}), DataError);
}
