#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mtrx/semantic_encoding.hpp"
#include "test_util.hpp"

using namespace mtrx;

TEST(Tokenize, LowercasesAndSplitsOnNonAlphanumerics) {
  EXPECT_EQ(tokenize("Red  Traffic-Light, ahead!"),
            (std::vector<std::string>{"red", "traffic", "light", "ahead"}));
  EXPECT_TRUE(tokenize("  --  ").empty());
}

TEST(ReferenceEncoder, DescriptorDefaults) {
  ReferenceEncoder enc;
  EXPECT_EQ(enc.descriptor().dims, 256u);
  EXPECT_EQ(enc.descriptor().encoder_id, "reference-feature-hash");
  EXPECT_NE(ReferenceEncoder(256, 1).descriptor(), ReferenceEncoder(256, 2).descriptor());
}

TEST(ReferenceEncoder, UnitNormAndDeterministic) {
  ReferenceEncoder enc;
  const auto a = enc.encode({"pedestrian crossing zebra", std::nullopt});
  const auto b = enc.encode({"pedestrian crossing zebra", std::nullopt});
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
}

// Oracle: embeddings are normalized bucket-count vectors, so the cosine of two texts is the
// dot product of their count vectors over the product of norms. Computed independently here.
TEST(ReferenceEncoder, CosineMatchesCountVectorOracle) {
  ReferenceEncoder enc;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::string s = test::random_text(rng), t = test::random_text(rng);
    std::map<std::size_t, double> cs, ct;
    for (const auto& w : tokenize(s)) cs[enc.bucket_of(w)] += 1;
    for (const auto& w : tokenize(t)) ct[enc.bucket_of(w)] += 1;
    double dot = 0, ns = 0, nt = 0;
    for (auto [k, v] : cs) ns += v * v, dot += ct.count(k) ? v * ct[k] : 0.0;
    for (auto [k, v] : ct) nt += v * v;
    EXPECT_NEAR(cosine_similarity(enc.encode({s, {}}), enc.encode({t, {}})), dot / std::sqrt(ns * nt), 1e-12);
  }
}

TEST(ReferenceEncoder, DisjointBucketsGiveZeroSimilarity) {
  ReferenceEncoder enc;
  std::set<std::size_t> a, b;
  for (const auto& w : tokenize("red traffic light")) a.insert(enc.bucket_of(w));
  for (const auto& w : tokenize("pedestrian crossing zebra")) b.insert(enc.bucket_of(w));
  for (auto x : a) ASSERT_FALSE(b.count(x)) << "fixture texts collide in bucket " << x;
  EXPECT_EQ(cosine_similarity(enc.encode({"red traffic light", {}}), enc.encode({"pedestrian crossing zebra", {}})),
            0.0);
}

TEST(ReferenceEncoder, IdenticalTextHasSimilarityOne) {
  ReferenceEncoder enc;
  const auto v = enc.encode({"school zone with children", {}});
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-12);
}

TEST(ReferenceEncoder, EmptyContentRejected) {
  ReferenceEncoder enc;
  try {
    enc.encode({"", std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyContent);
  }
  EXPECT_THROW(enc.encode({"...", std::nullopt}), Error);
}

TEST(EmbeddingVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(EmbeddingVector(std::vector<double>{}), Error);
  EXPECT_THROW(EmbeddingVector(std::vector<double>{1.0, NAN}), Error);
  EXPECT_THROW(EmbeddingVector(std::vector<double>{INFINITY}), Error);
}

TEST(Cosine, ScaleInvariantAndSymmetric) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const EmbeddingVector va(a), vb(b);
    const double s = cosine_similarity(va, vb);
    EXPECT_LE(std::abs(s), 1.0);
    EXPECT_NEAR(s, cosine_similarity(vb, va), 1e-15);
    EXPECT_NEAR(s, cosine_similarity(va.scaled(3.7), vb.scaled(0.2)), 1e-12);
  }
}

TEST(Cosine, Errors) {
  const EmbeddingVector a(std::vector<double>{1, 0}), b(std::vector<double>{1, 0, 0}),
      z(std::vector<double>{0, 0});
  try {
    cosine_similarity(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    cosine_similarity(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Cosine, AntiParallelIsMinusOne) {
  const EmbeddingVector a(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(cosine_similarity(a, a.scaled(-1.0)), -1.0, 1e-15);
}
