#include "belt2/bpe/bpe.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "belt2/error.hpp"
#include "belt2/numcore/rng.hpp"

namespace belt2 {

namespace {

const char* const kSpecialNames[] = {"<pad>", "<s>", "</s>", "<unk>"};

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

bool ends_with_marker(const std::string& s) {
  const std::string m = kEndOfWord;
  return s.size() >= m.size() && s.compare(s.size() - m.size(), m.size(), m) == 0;
}

void merge_in_place(std::vector<std::string>& syms, const BpeVocab::Merge& m) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
      out.push_back(syms[i] + syms[i + 1]);
      ++i;
    } else {
      out.push_back(syms[i]);
    }
  }
  syms = std::move(out);
}

}  // namespace

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    n = std::min(n, word.size() - i);
    out.push_back(word.substr(i, n));
    i += n;
  }
  if (!out.empty()) out.back() += kEndOfWord;
  return out;
}

std::string piece_surface(const std::string& piece) {
  return ends_with_marker(piece) ? piece.substr(0, piece.size() - std::string(kEndOfWord).size()) : piece;
}

BpeVocab::BpeVocab(std::vector<std::string> alphabet, std::vector<Merge> merges, std::vector<std::string> extra_specials)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)), extra_specials_(std::move(extra_specials)) {
  auto add = [&](const std::string& t) {
    if (token_to_id_.contains(t)) return;
    token_to_id_[t] = static_cast<std::int64_t>(id_to_token_.size());
    id_to_token_.push_back(t);
  };
  for (const char* s : kSpecialNames) add(s);
  for (const auto& s : extra_specials_) {
    if (token_to_id_.contains(s)) throw ConfigError("duplicate special token " + s);
    add(s);
  }
  for (const auto& a : alphabet_) add(a);
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    merge_rank_.emplace(merges_[i], i);
    add(merges_[i].first + merges_[i].second);
  }
}

const std::string& BpeVocab::token(std::int64_t id) const {
  if (id < 0 || id >= size()) throw UnknownId("token id " + std::to_string(id) + " outside vocabulary");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::int64_t BpeVocab::id_of(const std::string& t) const {
  auto it = token_to_id_.find(t);
  return it == token_to_id_.end() ? -1 : it->second;
}

std::vector<std::string> BpeVocab::apply_merges(const std::string& word) const {
  auto syms = word_symbols(word);
  while (syms.size() > 1) {
    std::size_t best = merges_.size();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && it->second < best) best = it->second;
    }
    if (best == merges_.size()) break;
    merge_in_place(syms, merges_[best]);
  }
  return syms;
}

std::vector<BpePiece> BpeVocab::encode_word(const std::string& word) const {
  std::vector<BpePiece> out;
  for (auto& p : apply_merges(word)) {
    const auto id = id_of(p);
    out.push_back({std::move(p), id < 0 ? kUnkId : id});
  }
  return out;
}

std::vector<std::int64_t> BpeVocab::encode(const std::string& text) const {
  std::vector<std::int64_t> ids;
  for (const auto& w : split_ws(text))
    for (const auto& p : encode_word(w)) ids.push_back(p.id);
  return ids;
}

std::string BpeVocab::decode(std::span<const std::int64_t> ids) const {
  std::string out;
  for (auto id : ids) {
    const auto& t = token(id);
    if (id == kUnkId) {
      out += t;
      continue;
    }
    if (is_special(id)) continue;
    if (ends_with_marker(t)) {
      out += piece_surface(t);
      out += ' ';
    } else {
      out += t;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string BpeVocab::to_json() const {
  nlohmann::json j;
  j["alphabet"] = alphabet_;
  auto ms = nlohmann::json::array();
  for (const auto& m : merges_) ms.push_back({m.first, m.second});
  j["merges"] = ms;
  j["specials"] = {{"pad", kSpecialNames[0]}, {"bos", kSpecialNames[1]}, {"eos", kSpecialNames[2]},
                   {"unk", kSpecialNames[3]}, {"extra", extra_specials_}};
  return j.dump();
}

BpeVocab BpeVocab::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    return BpeVocab(j.at("alphabet").get<std::vector<std::string>>(), std::move(merges),
                    j.at("specials").at("extra").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vocab file: ") + e.what());
  }
}

std::uint64_t BpeVocab::hash() const { return Rng::hash(to_json()); }

void BpeVocab::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_json() << '\n';
}

BpeVocab BpeVocab::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t n_merges,
                   std::vector<std::string> extra_specials) {
  std::map<std::string, std::int64_t> freq;
  for (const auto& line : corpus)
    for (const auto& w : split_ws(line)) ++freq[w];
  if (freq.empty()) throw EmptyCorpus("BPE training corpus has no words");

  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  std::set<std::string> alphabet;
  for (const auto& [w, n] : freq) {
    auto syms = word_symbols(w);
    alphabet.insert(syms.begin(), syms.end());
    words.emplace_back(std::move(syms), n);
  }

  std::vector<BpeVocab::Merge> merges;
  while (merges.size() < n_merges) {
    std::map<BpeVocab::Merge, std::int64_t> counts;
    for (const auto& [syms, n] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += n;
    if (counts.empty()) break;
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    merges.push_back(best->first);
    for (auto& [syms, n] : words) merge_in_place(syms, best->first);
  }
  return BpeVocab({alphabet.begin(), alphabet.end()}, std::move(merges), std::move(extra_specials));
}

}  // namespace belt2
