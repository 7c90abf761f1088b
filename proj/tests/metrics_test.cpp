#include <gtest/gtest.h>

#include <json.hpp>

#include "belt2/error.hpp"
#include "belt2/metrics/metrics.hpp"

namespace belt2 {
namespace {

using Strs = std::vector<std::string>;

TEST(Bleu, IdenticalIsHundred) {
  Strs s = {"the cat sat on the mat", "a dog barks"};
  for (int n = 1; n <= 3; ++n) EXPECT_NEAR(bleu_n(s, s, n), 100.0, 1e-9);
}

TEST(Bleu, ClippedUnigramPrecision) {
  EXPECT_NEAR(bleu_n({"the the the the"}, {"the cat sat"}, 1), 25.0, 1e-9);
}

TEST(Bleu, EmptyHypothesisIsZero) { EXPECT_EQ(bleu_n({""}, {"the cat"}, 1), 0.0); }

TEST(Bleu, BrevityPenalty) {
  EXPECT_NEAR(bleu_n({"the cat sat on"}, {"the cat sat on the mat"}, 2), 60.653065971263345, 1e-9);
}

TEST(Bleu, CorpusAggregatesCounts) {
  EXPECT_NEAR(bleu_n({"a b c d", "x y z w"}, {"a b c e", "x y z w"}, 4), 72.31269021297695, 1e-9);
}

TEST(Bleu, ZeroOverlapAtHigherOrderIsZeroUnlessSmoothed) {
  EXPECT_EQ(bleu_n({"b a"}, {"a b"}, 2), 0.0);
  EXPECT_GT(bleu_n({"b a"}, {"a b"}, 2, true), 0.0);
}

TEST(Bleu, OrderInvariant) {
  Strs h = {"a b c", "d e", "f g h i"}, r = {"a b d", "d e", "f g i h"};
  Strs h2 = {h[2], h[0], h[1]}, r2 = {r[2], r[0], r[1]};
  EXPECT_DOUBLE_EQ(bleu_n(h, r, 2), bleu_n(h2, r2, 2));
}

TEST(Bleu, LengthMismatchThrows) { EXPECT_THROW(bleu_n({"a"}, {"a", "b"}, 1), LengthMismatch); }

TEST(Rouge, Identical) {
  auto r = rouge1({"a b c"}, {"a b c"});
  EXPECT_NEAR(r.precision, 100, 1e-9);
  EXPECT_NEAR(r.recall, 100, 1e-9);
  EXPECT_NEAR(r.f1, 100, 1e-9);
}

TEST(Rouge, PartialOverlap) {
  auto r = rouge1({"a b c d"}, {"a b x"});
  EXPECT_NEAR(r.precision, 50.0, 1e-9);
  EXPECT_NEAR(r.recall, 200.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.f1, 57.14285714285714, 1e-9);
}

TEST(Rouge, Disjoint) {
  auto r = rouge1({"a b"}, {"c d"});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
}

TEST(Cls, AllCorrect) {
  auto m = cls_metrics({0, 1, 2}, {0, 1, 2}, 3);
  EXPECT_NEAR(m.accuracy, 100, 1e-9);
  EXPECT_NEAR(m.f1, 100, 1e-9);
}

TEST(Cls, HalfRight) {
  auto m = cls_metrics({0, 0, 1, 1}, {0, 1, 0, 1}, 2);
  EXPECT_NEAR(m.accuracy, 50, 1e-9);
  EXPECT_NEAR(m.precision, 50, 1e-9);
  EXPECT_NEAR(m.recall, 50, 1e-9);
  EXPECT_NEAR(m.f1, 50, 1e-9);
}

TEST(Cls, ConstantPredictor) {
  auto m = cls_metrics({1, 1, 1, 1, 1, 1}, {0, 1, 2, 0, 1, 2}, 3);
  EXPECT_NEAR(m.accuracy, 100.0 / 3.0, 1e-9);
}

TEST(Report, JsonHasAllFields) {
  auto r = text_report({"a b"}, {"a b"});
  auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["n_samples"], 1);
  EXPECT_NEAR(j["bleu"]["1"].get<double>(), 100.0, 1e-9);
  EXPECT_FALSE(j.contains("cls"));
}

}  // namespace
}  // namespace belt2
