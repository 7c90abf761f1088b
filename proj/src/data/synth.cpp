#include "belt2/data/synth.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "belt2/error.hpp"
#include "belt2/numcore/rng.hpp"

namespace belt2 {

namespace {

const std::vector<std::string> kPositive = {"brilliant", "moving",   "delightful", "charming", "superb",
                                            "wonderful", "touching", "gripping",   "elegant",  "witty"};
const std::vector<std::string> kNegative = {"dull",     "tedious", "clumsy",   "shallow",  "bland",
                                            "awkward",  "lifeless", "tiresome", "messy",   "forgettable"};
const std::vector<std::string> kNeutral = {"long", "recent", "early", "quiet", "small",
                                           "local", "new",   "old",   "french", "modern"};
const std::vector<std::string> kNouns = {"film",  "story",  "performance", "script", "movie",  "drama",
                                         "comedy", "sequel", "score",      "cast",   "thriller", "documentary"};
const std::vector<std::string> kVerbs = {"surprised", "followed", "entertained", "reached", "confused", "met"};
const std::vector<std::string> kObjects = {"the audience", "most critics", "a young crowd", "the jury",
                                           "every viewer", "the festival"};
const std::vector<std::string> kNames = {"Walter", "Maria", "Henry", "Elena", "George", "Clara", "Samuel", "Alice"};
const std::vector<std::string> kRoles = {"painter", "senator", "composer", "teacher", "novelist", "engineer"};
const std::vector<std::string> kPlaces = {"Springport", "Boston", "Ohio", "Vienna", "Denver", "Lyon", "Toronto"};
const std::vector<std::string> kAdverbs = {"truly", "rather", "mostly", "quite", "very"};

std::string lower_letters(const std::string& w) {
  std::string out;
  for (unsigned char c : w)
    if (std::isalpha(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.uniform_int(v.size())]; }

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::vector<double> clean_word_embedding(const std::string& word, std::int64_t dim, std::uint64_t seed) {
  std::vector<std::string> grams{"#" + word};
  const std::string padded = "<" + word + ">";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(padded.substr(i, 3));
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  for (const auto& g : grams) {
    Rng r = Rng(seed).fork(g);
    for (auto& x : v) x += r.normal();
  }
  const double k = 1.0 / std::sqrt(static_cast<double>(grams.size()));
  for (auto& x : v) x *= k;
  return v;
}

int keyword_sentiment(const std::string& sentence) {
  int score = 0;
  for (const auto& tok : split_ws(sentence)) {
    const auto w = lower_letters(tok);
    for (const auto& p : kPositive) score += (w == p);
    for (const auto& n : kNegative) score -= (w == n);
  }
  return score > 0 ? 2 : (score < 0 ? 0 : 1);
}

std::vector<std::string> generate_sentences(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("sentences");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 200 * (n + 10)) throw ConfigError("sentence generator exhausted at " + std::to_string(out.size()));
    const auto cls = rng.uniform_int(3);
    const auto& adj = cls == 0 ? pick(kNegative, rng) : (cls == 2 ? pick(kPositive, rng) : pick(kNeutral, rng));
    std::string s;
    switch (rng.uniform_int(4)) {
      case 0:
        s = "The " + adj + " " + pick(kNouns, rng) + " " + pick(kVerbs, rng) + " " + pick(kObjects, rng) + " in " +
            pick(kPlaces, rng) + ".";
        break;
      case 1:
        s = pick(kNames, rng) + " was a " + adj + " " + pick(kRoles, rng) + " from " + pick(kPlaces, rng) + ".";
        break;
      case 2:
        s = "This " + pick(kNouns, rng) + " is " + pick(kAdverbs, rng) + " " + adj + ".";
        break;
      default:
        s = pick(kNames, rng) + " wrote a " + adj + " " + pick(kNouns, rng) + " about " + pick(kPlaces, rng) + ".";
        break;
    }
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<EegSample> synth_generate(const std::vector<std::string>& sentences, std::int64_t dim, double noise_std,
                                      std::uint64_t seed, int n_subjects) {
  if (dim < kMinSynthDim) throw ConfigError("synthetic EEG width must be >= 8, got " + std::to_string(dim));
  if (n_subjects < 1) throw ConfigError("need at least one subject");
  std::vector<EegSample> out;
  const Rng root(seed);
  for (int subj = 1; subj <= n_subjects; ++subj) {
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      EegSample s;
      s.subject = "S" + std::to_string(subj);
      s.id = s.subject + "_" + std::to_string(i);
      s.text = sentences[i];
      Rng noise = root.fork("noise").fork(static_cast<std::uint64_t>(subj) * 1000003ULL + i);
      for (const auto& w : split_ws(sentences[i])) {
        auto eeg = clean_word_embedding(w, dim, seed);
        if (noise_std > 0.0)
          for (auto& x : eeg) x += noise.normal(0.0, noise_std);
        s.words.push_back({w, std::move(eeg)});
      }
      s.sentiment = keyword_sentiment(sentences[i]);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace belt2
