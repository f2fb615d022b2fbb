#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fmnsed/assembly.hpp"
#include "fmnsed/weights_io.hpp"
#include "oracles/naive_kernels.hpp"

using namespace fmnsed;

namespace {

WeightStore small_store() {
  std::mt19937_64 rng(51);
  WeightStore w;
  w.insert("a.w", oracle::random_tensor({3, 5}, rng));
  w.insert("b", oracle::random_tensor({7}, rng));
  w.insert("c.scalar", Tensor({1}, -0.0f));
  w.insert("d.conv", oracle::random_tensor({2, 1, 3, 3}, rng));
  return w;
}

/// Byte position of the first entry's u64 offset ("a.w", rank 2).
constexpr std::size_t kFirstOffsetAt = 12 + 2 + 3 + 1 + 1 + 2 * 4;

void expect_same(const WeightStore& a, const WeightStore& b) {
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, t] : a.entries()) {
    ASSERT_TRUE(b.contains(name)) << name;
    const Tensor& u = b.get(name);
    ASSERT_EQ(u.shape(), t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      ASSERT_EQ(std::bit_cast<std::uint32_t>(u[i]), std::bit_cast<std::uint32_t>(t[i])) << name;
    }
  }
}

}  // namespace

TEST(Fmnw, RoundTripIsBitExact) {
  const WeightStore w = small_store();
  expect_same(w, decode_fmnw(encode_fmnw(w)));
  expect_same(WeightStore{}, decode_fmnw(encode_fmnw(WeightStore{})));
}

TEST(Fmnw, FullModelRoundTripsThroughAFile) {
  const ModelSpec spec = *parse_model_name("fmn04+TF:128");
  const WeightStore w = random_model_weights(spec, 52);
  const auto path = std::filesystem::temp_directory_path() / "fmnsed_test_weights.fmnw";
  save_fmnw(path.string(), w);
  const WeightStore r = load_fmnw(path.string());
  std::filesystem::remove(path);
  EXPECT_NO_THROW(r.validate(model_inventory(spec)));
  expect_same(w, r);
}

TEST(Fmnw, LayoutIsLittleEndianAnd64ByteAligned) {
  const auto bytes = encode_fmnw(small_store());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FMNW");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 4);
  EXPECT_EQ(bytes[12], 3);
  EXPECT_EQ(bytes[13], 0);
  EXPECT_EQ(bytes.size() % 64, 0u);
  // offsets of the four tensors: 15 floats -> 64, 7 floats -> 128, 1 float -> 192
  std::vector<std::uint64_t> offsets;
  std::size_t pos = 12;
  for (int i = 0; i < 4; ++i) {
    const std::size_t name_len = bytes[pos] | bytes[pos + 1] << 8;
    pos += 2 + name_len + 1;
    const std::size_t ndim = bytes[pos];
    pos += 1 + 4 * ndim;
    std::uint64_t off = 0;
    for (int b = 0; b < 8; ++b) off |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
    offsets.push_back(off);
    pos += 8;
  }
  EXPECT_EQ(offsets, (std::vector<std::uint64_t>{0, 64, 128, 192}));
}

TEST(Fmnw, RejectsCorruptFiles) {
  const auto good = encode_fmnw(small_store());
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_fmnw(bad), DataError);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(decode_fmnw(bad), DataError);
  bad = good;
  bad[kFirstOffsetAt] = 4;
  EXPECT_THROW(decode_fmnw(bad), DataError);
  bad = good;
  bad[12 + 2 + 3] = 1;  // dtype
  EXPECT_THROW(decode_fmnw(bad), DataError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() - 64}) {
    bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(decode_fmnw(bad), DataError) << cut;
  }
  EXPECT_THROW(load_fmnw("/nonexistent/weights.fmnw"), DataError);
}

TEST(Fmnw, RejectsNonFiniteAndDuplicateTensors) {
  WeightStore w;
  w.insert("x", Tensor({2}, 1.0f));
  auto bytes = encode_fmnw(w);
  // data section starts at 64: overwrite the first float with +inf
  const std::uint32_t inf = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::infinity());
  for (int b = 0; b < 4; ++b) bytes[64 + b] = static_cast<std::uint8_t>(inf >> (8 * b));
  EXPECT_THROW(decode_fmnw(bytes), DataError);

  WeightStore two;
  two.insert("x", Tensor({2}, 1.0f));
  two.insert("y", Tensor({2}, 2.0f));
  bytes = encode_fmnw(two);
  // rename the second entry to "x"
  const std::size_t second_name = 12 + 2 + 1 + 1 + 1 + 4 + 8 + 2;
  ASSERT_EQ(bytes[second_name], 'y');
  bytes[second_name] = 'x';
  EXPECT_THROW(decode_fmnw(bytes), DataError);
}

TEST(WeightStore, RejectsDuplicatesNonFiniteAndShapeMismatch) {
  WeightStore w;
  w.insert("a", Tensor({2}, 0.0f));
  EXPECT_THROW(w.insert("a", Tensor({2}, 0.0f)), WeightError);
  EXPECT_THROW(w.insert("n", Tensor({1}, std::nanf(""))), WeightError);
  EXPECT_THROW(w.get("a", {3}), WeightError);
  EXPECT_THROW(w.get("missing"), WeightError);
  const ParamInventory inv{{"a", {2}, ParamInit::zero}, {"b", {1}, ParamInit::zero}};
  EXPECT_THROW(w.validate(inv), WeightError);
}

TEST(WeightStore, RandomWeightsAreDeterministicPerSeed) {
  const ParamInventory inv = fmn_inventory(build_fmn(0.4));
  const WeightStore a = random_weights(inv, 1);
  const WeightStore b = random_weights(inv, 1);
  const WeightStore c = random_weights(inv, 2);
  EXPECT_EQ(a.get("stem.conv.w"), b.get("stem.conv.w"));
  EXPECT_NE(a.get("stem.conv.w"), c.get("stem.conv.w"));
}
