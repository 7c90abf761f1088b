#include "belt2/data/summary.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

#include "belt2/error.hpp"

namespace belt2 {

const std::vector<std::string>& summary_stopwords() {
  static const std::vector<std::string> words = {
      "a",     "about", "after", "again", "all",   "also",  "am",    "an",    "and",   "any",   "are",   "as",
      "at",    "be",    "been",  "before", "being", "but",   "by",    "can",   "could", "did",   "do",    "does",
      "for",   "from",  "had",   "has",   "have",  "he",    "her",   "hers",  "him",   "his",   "how",   "i",
      "if",    "in",    "into",  "is",    "it",    "its",   "me",    "my",    "no",    "nor",   "not",   "of",
      "on",    "or",    "our",   "she",   "so",    "some",  "such",  "than",  "that",  "the",   "their", "them",
      "then",  "there", "these", "they",  "this",  "those", "to",    "too",   "us",    "very",  "was",   "we",
      "were",  "what",  "when",  "where", "which", "while", "who",   "whom",  "why",   "will",  "with",  "would",
      "you",   "your"};
  return words;
}

std::string summarize(const std::string& sentence, int T) {
  if (T < 1) throw ConfigError("summary length must be >= 1");
  static const std::unordered_set<std::string> stop(summary_stopwords().begin(), summary_stopwords().end());
  std::istringstream is(sentence);
  std::vector<std::string> kept;
  std::string first;
  for (std::string tok; is >> tok;) {
    if (first.empty()) first = tok;
    std::string key;
    for (unsigned char c : tok)
      if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
    if (key.empty() || stop.contains(key)) continue;
    kept.push_back(tok);
    if (static_cast<int>(kept.size()) == T) break;
  }
  if (kept.empty()) return first;
  std::string out = kept[0];
  for (std::size_t i = 1; i < kept.size(); ++i) out += " " + kept[i];
  return out;
}

std::vector<EegSample> build_summary_targets(std::vector<EegSample> samples, int T) {
  for (auto& s : samples) s.summary = summarize(s.text, T);
  return samples;
}

}  // namespace belt2
