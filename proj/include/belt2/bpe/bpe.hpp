#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace belt2 {

/// Appended to the last symbol of every word; decode turns it into a space.
inline constexpr const char* kEndOfWord = "</w>";

inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kBosId = 1;
inline constexpr std::int64_t kEosId = 2;
inline constexpr std::int64_t kUnkId = 3;

struct BpePiece {
  std::string piece;  // vocabulary form, may end with kEndOfWord
  std::int64_t id;
};

/// Word-internal BPE vocabulary. Ids: PAD, BOS, EOS, UNK, extra specials,
/// base characters (sorted), then one id per merge in learned order.
class BpeVocab {
 public:
  using Merge = std::pair<std::string, std::string>;

  BpeVocab() = default;
  /// Builds the id table from an alphabet and an ordered merge list.
  BpeVocab(std::vector<std::string> alphabet, std::vector<Merge> merges, std::vector<std::string> extra_specials = {});

  std::int64_t size() const { return static_cast<std::int64_t>(id_to_token_.size()); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::vector<std::string>& extra_specials() const { return extra_specials_; }
  const std::string& token(std::int64_t id) const;
  /// -1 when absent.
  std::int64_t id_of(const std::string& token) const;
  bool is_special(std::int64_t id) const { return id >= 0 && id < 4 + static_cast<std::int64_t>(extra_specials_.size()); }

  std::vector<BpePiece> encode_word(const std::string& word) const;
  /// Concatenated pieces of every whitespace-separated word, no BOS/EOS.
  std::vector<std::int64_t> encode(const std::string& text) const;
  /// Pieces joined, end-of-word markers become spaces. Special ids other
  /// than UNK are skipped; UNK renders as "<unk>". Throws UnknownId.
  std::string decode(std::span<const std::int64_t> ids) const;

  /// FNV-1a over the serialized vocabulary; stored in checkpoints.
  std::uint64_t hash() const;

  std::string to_json() const;
  static BpeVocab from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static BpeVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> apply_merges(const std::string& word) const;

  std::vector<std::string> alphabet_;
  std::vector<Merge> merges_;
  std::vector<std::string> extra_specials_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int64_t> token_to_id_;
  std::map<Merge, std::size_t> merge_rank_;
};

/// Splits a word into UTF-8 code points, the last one carrying kEndOfWord.
std::vector<std::string> word_symbols(const std::string& word);

/// Surface text of a piece (marker removed).
std::string piece_surface(const std::string& piece);

/// Greedy training: repeatedly merges the most frequent adjacent pair inside
/// words, ties broken by the lexicographically smallest pair. Stops early when
/// no pair remains. Throws EmptyCorpus.
BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t n_merges,
                   std::vector<std::string> extra_specials = {});

}  // namespace belt2
