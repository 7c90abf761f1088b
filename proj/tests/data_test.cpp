#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "belt2/data/sample.hpp"
#include "belt2/data/split.hpp"
#include "belt2/data/summary.hpp"
#include "belt2/data/synth.hpp"
#include "belt2/error.hpp"

namespace belt2 {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "belt2_data_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

TEST(Jsonl, EmptyFileGivesNoSamples) {
  auto p = temp_file("empty.jsonl");
  write_text(p, "");
  EXPECT_TRUE(load_jsonl(p).empty());
}

TEST(Jsonl, ParsesOneLine) {
  auto p = temp_file("one.jsonl");
  write_text(p,
             R"({"id":"a","subject":"S1","text":"x y z","sentiment":1,"words":[{"w":"x","eeg":[1,2,3,4]},)"
             R"({"w":"y","eeg":[0,0,0,0]},{"w":"z","eeg":[1,1,1,1]}]})"
             "\n");
  auto s = load_jsonl(p);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].words.size(), 3u);
  EXPECT_EQ(s[0].dim(), 4);
  EXPECT_EQ(s[0].sentiment, 1);
  EXPECT_FALSE(s[0].summary.has_value());
}

TEST(Jsonl, DimensionChangeIsRejected) {
  auto p = temp_file("dims.jsonl");
  write_text(p,
             R"({"id":"a","subject":"S1","text":"x","words":[{"w":"x","eeg":[1,2,3]}]})"
             "\n"
             R"({"id":"b","subject":"S1","text":"x","words":[{"w":"x","eeg":[1,2,3,4]}]})"
             "\n");
  EXPECT_THROW(load_jsonl(p), DimMismatch);
}

TEST(Jsonl, MalformedLineIsParseError) {
  auto p = temp_file("bad.jsonl");
  write_text(p, "{not json\n");
  EXPECT_THROW(load_jsonl(p), ParseError);
}

TEST(Jsonl, MissingFieldIsSchemaError) {
  auto p = temp_file("schema.jsonl");
  write_text(p, R"({"id":"a","subject":"S1","words":[{"w":"x","eeg":[1]}]})" "\n");
  EXPECT_THROW(load_jsonl(p), SchemaError);
}

TEST(Jsonl, MissingFileIsIoError) { EXPECT_THROW(load_jsonl(temp_file("nope.jsonl")), IoError); }

TEST(Jsonl, SynthRoundTripIsBitIdentical) {
  auto samples = build_summary_targets(synth_generate(generate_sentences(10, 3), 16, 0.3, 3, 2));
  auto p = temp_file("round.jsonl");
  save_jsonl(p, samples);
  auto back = load_jsonl(p);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_EQ(back[i].text, samples[i].text);
    EXPECT_EQ(back[i].summary, samples[i].summary);
    EXPECT_EQ(back[i].sentiment, samples[i].sentiment);
    ASSERT_EQ(back[i].words.size(), samples[i].words.size());
    for (std::size_t w = 0; w < samples[i].words.size(); ++w) EXPECT_EQ(back[i].words[w].eeg, samples[i].words[w].eeg);
  }
}

TEST(Synth, NoiselessRepeatedWordIsIdentical) {
  auto s = synth_generate({"the cat saw the dog"}, 8, 0.0, 11);
  ASSERT_EQ(s[0].words.size(), 5u);
  EXPECT_EQ(s[0].words[0].eeg, s[0].words[3].eeg);
  EXPECT_NE(s[0].words[1].eeg, s[0].words[4].eeg);
}

TEST(Synth, SameSeedIsBitIdentical) {
  auto sents = generate_sentences(20, 5);
  auto a = synth_generate(sents, 12, 0.5, 9, 3);
  auto b = synth_generate(sents, 12, 0.5, 9, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t w = 0; w < a[i].words.size(); ++w) EXPECT_EQ(a[i].words[w].eeg, b[i].words[w].eeg);
  EXPECT_EQ(generate_sentences(20, 5), sents);
}

TEST(Synth, NoiseStdMatchesWithinTwentyPercent) {
  std::vector<std::string> sents(1000, "word");
  auto s = synth_generate(sents, 8, 0.1, 2);
  const auto clean = clean_word_embedding("word", 8, 2);
  for (std::size_t c = 0; c < 8; ++c) {
    double m = 0, m2 = 0;
    for (const auto& x : s) {
      const double d = x.words[0].eeg[c] - clean[c];
      m += d;
      m2 += d * d;
    }
    m /= 1000.0;
    const double sd = std::sqrt(m2 / 1000.0 - m * m);
    EXPECT_NEAR(sd, 0.1, 0.02) << "coordinate " << c;
  }
}

TEST(Synth, RejectsNarrowWidth) { EXPECT_THROW(synth_generate({"a b"}, 7, 0.0, 1), ConfigError); }

TEST(Synth, SentencesAreUniqueAndCoverAllClasses) {
  auto sents = generate_sentences(200, 1);
  std::set<std::string> u(sents.begin(), sents.end());
  EXPECT_EQ(u.size(), 200u);
  std::set<int> classes;
  for (const auto& s : sents) classes.insert(keyword_sentiment(s));
  EXPECT_EQ(classes.size(), 3u);
}

TEST(Synth, KeywordRule) {
  EXPECT_EQ(keyword_sentiment("A brilliant, moving film."), 2);
  EXPECT_EQ(keyword_sentiment("A dull film."), 0);
  EXPECT_EQ(keyword_sentiment("A film."), 1);
  EXPECT_EQ(keyword_sentiment("Brilliant but dull."), 1);
}

std::vector<EegSample> corpus(std::size_t n, int subjects) {
  return synth_generate(generate_sentences(n, 7), 8, 0.1, 7, subjects);
}

TEST(Split, EightyTenTen) {
  auto s = corpus(100, 1);
  auto d = split(s, SplitSpec{});
  EXPECT_EQ(d.train.size(), 80u);
  EXPECT_EQ(d.val.size(), 10u);
  EXPECT_EQ(d.test.size(), 10u);
}

TEST(Split, SharedSentenceStaysTogether) {
  auto s = corpus(30, 3);
  auto d = split(s, SplitSpec{});
  std::set<std::string> tr, va, te;
  for (const auto& x : d.train) tr.insert(x.text);
  for (const auto& x : d.val) va.insert(x.text);
  for (const auto& x : d.test) te.insert(x.text);
  for (const auto& t : tr) EXPECT_TRUE(!va.contains(t) && !te.contains(t));
  for (const auto& t : va) EXPECT_FALSE(te.contains(t));
  EXPECT_EQ(d.train.size() + d.val.size() + d.test.size(), s.size());
  EXPECT_EQ(d.train.size() % 3, 0u);
}

TEST(Split, CrossSubject) {
  auto s = corpus(20, 3);
  SplitSpec spec;
  spec.mode = SplitMode::kCrossSubject;
  spec.held_out_subject = "S2";
  auto d = split(s, spec);
  EXPECT_EQ(d.test.size(), 20u);
  for (const auto& x : d.test) EXPECT_EQ(x.subject, "S2");
  for (const auto& x : d.train) EXPECT_NE(x.subject, "S2");
  EXPECT_EQ(d.train.size() + d.val.size(), 40u);
}

TEST(Split, CrossSubjectNeedsSubject) {
  SplitSpec spec;
  spec.mode = SplitMode::kCrossSubject;
  EXPECT_THROW(split(corpus(10, 2), spec), ConfigError);
}

TEST(Split, TooFewSentencesIsEmptySplit) { EXPECT_THROW(split(corpus(3, 1), SplitSpec{}), EmptySplit); }

TEST(Split, Deterministic) {
  auto s = corpus(50, 2);
  SplitSpec spec;
  spec.seed = 4;
  auto a = split(s, spec), b = split(s, spec);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].id, b.test[i].id);
}

TEST(Summary, ContentWordPrefix) {
  EXPECT_EQ(summarize("He died in Springport, New York in 1815.", 8), "died Springport, New York 1815.");
}

TEST(Summary, ShortSentenceKeepsAllContentWords) { EXPECT_EQ(summarize("The cat sat.", 8), "cat sat."); }

TEST(Summary, SingleWord) { EXPECT_EQ(summarize("The cat sat.", 1), "cat"); }

TEST(Summary, AllStopwordsFallsBackToFirstToken) { EXPECT_EQ(summarize("It is what it is", 8), "It"); }

}  // namespace
}  // namespace belt2
