#include <gtest/gtest.h>

#include <filesystem>

#include "belt2/bpe/bpe.hpp"
#include "belt2/error.hpp"

namespace belt2 {
namespace {

std::vector<std::string> surfaces(const std::vector<BpePiece>& pieces) {
  std::vector<std::string> out;
  for (const auto& p : pieces) out.push_back(piece_surface(p.piece));
  return out;
}

TEST(Bpe, FirstMergeIsMostFrequentPair) {
  auto v = train_bpe({"aaab", "aaab"}, 1);
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], BpeVocab::Merge("a", "a"));
}

TEST(Bpe, TiesBreakLexicographically) {
  auto v = train_bpe({"ab cd"}, 1);
  EXPECT_EQ(v.merges()[0], BpeVocab::Merge("a", "b</w>"));
}

TEST(Bpe, ZeroMergesIsCharacterLevel) {
  auto v = train_bpe({"hello world"}, 0);
  auto p = v.encode_word("hello");
  EXPECT_EQ(surfaces(p), (std::vector<std::string>{"h", "e", "l", "l", "o"}));
  for (const auto& x : p) EXPECT_NE(x.id, kUnkId);
}

TEST(Bpe, RetrainIsIdentical) {
  std::vector<std::string> corpus = {"the cat sat on the mat", "the dog sat", "a cat and a dog"};
  EXPECT_EQ(train_bpe(corpus, 20).merges(), train_bpe(corpus, 20).merges());
}

TEST(Bpe, NoCrossWordMerges) {
  auto v = train_bpe({"a b a b a b"}, 10);
  for (const auto& m : v.merges()) EXPECT_EQ(m.first.find(kEndOfWord), std::string::npos);
}

TEST(Bpe, FrequentWordBecomesSingleToken) {
  auto v = train_bpe({"banana banana banana apple"}, 50);
  auto p = v.encode_word("banana");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].piece, "banana</w>");
}

TEST(Bpe, VisuallySplitsIntoVisAndUally) {
  BpeVocab v({"V", "a", "i", "l", "s", "u", "y</w>"},
             {{"V", "i"}, {"Vi", "s"}, {"l", "y</w>"}, {"l", "ly</w>"}, {"a", "lly</w>"}, {"u", "ally</w>"}});
  auto p = v.encode_word("Visually");
  EXPECT_EQ(surfaces(p), (std::vector<std::string>{"Vis", "ually"}));
  std::vector<std::int64_t> ids;
  for (const auto& x : p) ids.push_back(x.id);
  EXPECT_EQ(v.decode(ids), "Visually");
}

TEST(Bpe, UnseenCharacterIsUnk) {
  auto v = train_bpe({"abc"}, 2);
  bool unk = false;
  for (const auto& p : v.encode_word("abz")) unk = unk || p.id == kUnkId;
  EXPECT_TRUE(unk);
}

TEST(Bpe, RoundTrip) {
  std::vector<std::string> corpus = {"He died in Springport, New York in 1815.", "The film is quite dull."};
  auto v = train_bpe(corpus, 30);
  for (const auto& s : corpus) EXPECT_EQ(v.decode(v.encode(s)), s);
  EXPECT_EQ(v.decode(std::vector<std::int64_t>{}), "");
}

TEST(Bpe, UnknownIdThrows) {
  auto v = train_bpe({"abc"}, 0);
  EXPECT_THROW(v.decode(std::vector<std::int64_t>{v.size()}), UnknownId);
}

TEST(Bpe, TokenCountNonIncreasingInMerges) {
  std::vector<std::string> corpus = {"the quick brown fox jumps over the lazy dog", "the dog barks", "quick quick fox"};
  std::size_t prev = SIZE_MAX;
  for (std::size_t n : {0, 5, 10, 20, 40, 80}) {
    auto v = train_bpe(corpus, n);
    std::size_t total = 0;
    for (const auto& s : corpus) total += v.encode(s).size();
    EXPECT_LE(total, prev);
    prev = total;
  }
}

TEST(Bpe, ExtraSpecialsAndJsonRoundTrip) {
  auto v = train_bpe({"one two three"}, 5, {"<c0>", "<c1>", "<c2>"});
  EXPECT_EQ(v.id_of("<c0>"), 4);
  EXPECT_TRUE(v.is_special(6));
  auto path = std::filesystem::temp_directory_path() / "belt2_vocab_test.json";
  v.save(path);
  auto w = BpeVocab::load(path);
  EXPECT_EQ(w.hash(), v.hash());
  EXPECT_EQ(w.encode("one two three"), v.encode("one two three"));
  EXPECT_EQ(v.decode(std::vector<std::int64_t>{4, kBosId}), "");
}

TEST(Bpe, EmptyCorpusThrows) { EXPECT_THROW(train_bpe({"", "  "}, 3), EmptyCorpus); }

}  // namespace
}  // namespace belt2
