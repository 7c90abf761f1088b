#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace belt2 {

inline constexpr std::int64_t kDefaultMaxWords = 56;
inline constexpr int kNumSentimentClasses = 3;  // negative, neutral, positive

struct WordEeg {
  std::string word;
  std::vector<double> eeg;  // length D
};

/// One sentence read by one subject: word-aligned EEG embeddings plus the
/// text, sentiment and summary targets.
struct EegSample {
  std::string id;
  std::string subject;
  std::string text;
  std::vector<WordEeg> words;
  std::optional<int> sentiment;
  std::optional<std::string> summary;

  std::int64_t dim() const { return words.empty() ? 0 : static_cast<std::int64_t>(words.front().eeg.size()); }
  std::int64_t length() const { return static_cast<std::int64_t>(words.size()); }
};

/// Throws SchemaError for an empty/oversized word list or an out-of-range
/// sentiment, DimMismatch when word vectors differ in length.
void validate_sample(const EegSample& s, std::int64_t max_words = kDefaultMaxWords);

/// One JSON object per line:
/// {"id", "subject", "text", "sentiment"?, "summary"?, "words": [{"w", "eeg": [...]}]}
/// Errors: IoError (unreadable), ParseError (line), SchemaError (field),
/// DimMismatch (D differs within a sample or across lines).
std::vector<EegSample> load_jsonl(const std::filesystem::path& path, std::int64_t max_words = kDefaultMaxWords);
void save_jsonl(const std::filesystem::path& path, const std::vector<EegSample>& samples);

std::string to_json_line(const EegSample& s);
EegSample parse_json_line(const std::string& line, std::size_t line_no = 0);

}  // namespace belt2
