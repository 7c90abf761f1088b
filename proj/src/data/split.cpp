#include "belt2/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "belt2/error.hpp"
#include "belt2/numcore/rng.hpp"

namespace belt2 {

namespace {

// Deterministic Fisher-Yates with the project RNG.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

std::vector<std::string> unique_texts(const std::vector<const EegSample*>& samples) {
  std::vector<std::string> out;
  std::unordered_map<std::string, bool> seen;
  for (const auto* s : samples)
    if (seen.emplace(s->text, true).second) out.push_back(s->text);
  return out;
}

// Assigns subset indices (0 train, 1 val, 2 test) to n shuffled sentences.
std::vector<int> allocate(std::size_t n, const std::array<double, 3>& r) {
  auto n_train = static_cast<std::size_t>(std::llround(r[0] * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(r[1] * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  std::vector<int> out(n, 2);
  for (std::size_t i = 0; i < n_train; ++i) out[i] = 0;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) out[i] = 1;
  return out;
}

}  // namespace

SplitMode parse_split_mode(const std::string& s) {
  if (s == "cross_sentence") return SplitMode::kCrossSentence;
  if (s == "cross_subject") return SplitMode::kCrossSubject;
  throw ConfigError("unknown split mode '" + s + "'");
}

std::string split_mode_name(SplitMode m) {
  return m == SplitMode::kCrossSentence ? "cross_sentence" : "cross_subject";
}

DataSplits split(const std::vector<EegSample>& samples, const SplitSpec& spec) {
  for (double r : spec.ratios)
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  std::array<double, 3> ratios = spec.ratios;
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");

  std::vector<const EegSample*> pool;
  std::vector<const EegSample*> held;
  if (spec.mode == SplitMode::kCrossSubject) {
    if (!spec.held_out_subject) throw ConfigError("cross_subject split needs held_out_subject");
    for (const auto& s : samples) (s.subject == *spec.held_out_subject ? held : pool).push_back(&s);
    const double tv = ratios[0] + ratios[1];
    ratios = tv > 0 ? std::array<double, 3>{ratios[0] / tv, ratios[1] / tv, 0.0} : std::array<double, 3>{1.0, 0.0, 0.0};
  } else {
    for (const auto& s : samples) pool.push_back(&s);
  }

  auto texts = unique_texts(pool);
  Rng rng = Rng(spec.seed).fork("split");
  shuffle(texts, rng);
  const auto where = allocate(texts.size(), ratios);
  std::unordered_map<std::string, int> subset;
  for (std::size_t i = 0; i < texts.size(); ++i) subset[texts[i]] = where[i];

  DataSplits out;
  for (const auto& s : samples) {
    if (spec.mode == SplitMode::kCrossSubject && s.subject == *spec.held_out_subject) {
      out.test.push_back(s);
      continue;
    }
    switch (subset.at(s.text)) {
      case 0: out.train.push_back(s); break;
      case 1: out.val.push_back(s); break;
      default: out.test.push_back(s); break;
    }
  }
  const char* names[] = {"train", "val", "test"};
  const std::vector<EegSample>* parts[] = {&out.train, &out.val, &out.test};
  for (int i = 0; i < 3; ++i) {
    if (spec.ratios[i] > 0.0 && parts[i]->empty())
      throw EmptySplit(std::string(names[i]) + " split is empty (" + std::to_string(texts.size()) +
                       " unique sentences)");
  }
  return out;
}

}  // namespace belt2
