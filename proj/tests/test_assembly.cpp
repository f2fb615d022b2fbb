#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fmnsed/assembly.hpp"
#include "oracles/naive_kernels.hpp"

using namespace fmnsed;

TEST(ModelName, ParsesGridNames) {
  const auto s = parse_model_name("fmn10+TF:256");
  ASSERT_TRUE(s.has_value());
  EXPECT_DOUBLE_EQ(s->fmn.alpha, 1.0);
  EXPECT_EQ(s->seq.kind, SeqKind::tf);
  EXPECT_EQ(s->seq.hidden_dim, 256u);
  EXPECT_EQ(s->num_classes, 447u);
  const auto b = parse_model_name("fmn04");
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(b->seq.kind, SeqKind::none);
}

TEST(ModelName, RejectsMalformedNames) {
  for (const char* bad : {"bogus", "fmn", "fmn05", "fmn1", "fmn10+", "fmn10+TF", "fmn10+TF:", "fmn10+TF:0",
                          "fmn10+TF:0256", "fmn10+tf:256", "fmn10+NONE:256", "fmn10+TF:25x", "fmn10TF:256",
                          "fmn10+TF:-8", "fmn10+ATT:7", "FMN10"}) {
    EXPECT_FALSE(parse_model_name(bad).has_value()) << bad;
  }
}

TEST(ModelName, BijectiveOnTheGrid) {
  std::set<std::string> names;
  for (double a : kAlphaGrid) {
    for (SeqKind k : {SeqKind::none, SeqKind::tf, SeqKind::att, SeqKind::bigru, SeqKind::tcn, SeqKind::mamba,
                      SeqKind::hybrid}) {
      for (std::size_t h : {128, 256, 512, 1024}) {
        const ModelSpec spec = make_model_spec(a, k, h);
        const std::string name = model_name(spec);
        const auto back = parse_model_name(name);
        ASSERT_TRUE(back.has_value()) << name;
        EXPECT_EQ(model_name(*back), name);
        EXPECT_EQ(back->fmn.alpha, a);
        EXPECT_EQ(back->seq.kind, k);
        if (k != SeqKind::none) {
          EXPECT_EQ(back->seq.hidden_dim, h);
        }
        names.insert(name);
      }
    }
  }
  // NONE ignores the hidden width: 5 alphas x (1 + 6 kinds x 4 widths)
  EXPECT_EQ(names.size(), 5u * (1 + 6 * 4));
}

TEST(HiddenFromAlpha, MatchesReferenceWidth) {
  EXPECT_EQ(hidden_from_alpha(1.0), 256u);
  EXPECT_EQ(hidden_from_alpha(2.0), 512u);
  EXPECT_EQ(hidden_from_alpha(0.4), 104u);
}

TEST(Assembly, IdentityHeadPassesEmbeddingsThrough) {
  ModelSpec spec = make_model_spec(0.4);
  spec.num_classes = spec.fmn.embed_channels;
  WeightStore base = random_weights(fmn_inventory(spec.fmn), 3);
  WeightStore w;
  for (const auto& [n, t] : base.entries()) w.insert(n, t);
  Tensor eye({spec.num_classes, spec.num_classes}, 0.0f);
  for (std::size_t i = 0; i < spec.num_classes; ++i) eye.at(i, i) = 1.0f;
  w.insert("head.w", eye);
  w.insert("head.b", Tensor({spec.num_classes}, 0.0f));
  std::mt19937_64 rng(4);
  const Tensor mel = oracle::random_tensor({1, 128, 1000}, rng, -6.0f, 0.0f);
  const Tensor logits = forward_full(spec, w, mel);
  EXPECT_EQ(logits, transpose2d(forward_fmn(spec.fmn, w, mel)));
}

TEST(Assembly, ProbabilitiesAreSigmoidOfLogitsAndDeterministic) {
  const ModelSpec spec = *parse_model_name("fmn04+ATT:128");
  const WeightStore w = random_model_weights(spec, 5);
  std::mt19937_64 rng(6);
  const Tensor mel = oracle::random_tensor({1, 128, 1000}, rng, -6.0f, 0.0f);
  const Tensor logits = forward_full(spec, w, mel);
  const Tensor p = predict_probs(spec, w, mel);
  ASSERT_EQ(p.shape(), (Shape{250, 447}));
  for (std::size_t i = 0; i < p.size(); ++i) {
    ASSERT_EQ(p[i], static_cast<float>(sigmoid(static_cast<double>(logits[i]))));
    ASSERT_GT(p[i], 0.0f);
    ASSERT_LT(p[i], 1.0f);
  }
  EXPECT_EQ(predict_probs(spec, w, mel), p);
}

TEST(Assembly, BatchPredictionMatchesPerClip) {
  const ModelSpec spec = *parse_model_name("fmn04+BIGRU:128");
  const WeightStore w = random_model_weights(spec, 7);
  std::mt19937_64 rng(8);
  std::vector<Tensor> mels;
  for (int i = 0; i < 3; ++i) mels.push_back(oracle::random_tensor({1, 128, 1000}, rng, -6.0f, 0.0f));
  const auto batch = predict_batch(spec, w, mels, 3);
  for (std::size_t i = 0; i < mels.size(); ++i) EXPECT_EQ(batch[i], predict_probs(spec, w, mels[i]));
}

TEST(Assembly, ForwardReadsEveryInventoryTensor) {
  const ModelSpec spec = *parse_model_name("fmn04+HYBRID:128");
  WeightStore w = random_model_weights(spec, 9);
  std::set<std::string, std::less<>> seen;
  w.set_access_observer([&](std::string_view n) { seen.emplace(n); });
  (void)forward_full(spec, w, Tensor({1, 128, 1000}, -3.0f));
  for (const auto& d : model_inventory(spec)) EXPECT_TRUE(seen.contains(d.name)) << d.name;
}

TEST(Assembly, FreshHeadBiasStartsNearSilence) {
  const ModelSpec spec = make_model_spec(0.4);
  const WeightStore w = random_model_weights(spec, 10);
  for (float b : w.get("head.b").data()) EXPECT_EQ(b, -5.0f);
}

TEST(SelectEvalClasses, GathersColumnsInOrder) {
  std::mt19937_64 rng(11);
  const Tensor p = oracle::random_tensor({250, 447}, rng, 0.0f, 1.0f);
  std::vector<std::size_t> all(447);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(select_eval_classes(p, all), p);
  const std::vector<std::size_t> one{13};
  const Tensor c = select_eval_classes(p, one);
  ASSERT_EQ(c.shape(), (Shape{250, 1}));
  for (std::size_t t = 0; t < 250; ++t) EXPECT_EQ(c.at(t, 0), p.at(t, 13));

  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < 447; ++i) {
    if (rng() % 10 < 9) mask.push_back(i);
  }
  const Tensor g = select_eval_classes(p, mask);
  for (std::size_t t = 0; t < 250; t += 17) {
    for (std::size_t j = 0; j < mask.size(); ++j) ASSERT_EQ(g.at(t, j), p.at(t, mask[j]));
  }
  const std::vector<std::size_t> bad{3, 447};
  EXPECT_THROW(select_eval_classes(p, bad), ShapeError);
  const std::vector<std::size_t> unsorted{5, 3};
  EXPECT_THROW(select_eval_classes(p, unsorted), ShapeError);
}
