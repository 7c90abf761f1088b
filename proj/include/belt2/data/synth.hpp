#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "belt2/data/sample.hpp"

namespace belt2 {

inline constexpr std::int64_t kMinSynthDim = 8;

/// Noise-free embedding of a word: the normalized sum of seeded Gaussian
/// vectors, one per character trigram of "<word>" plus one for the whole
/// word, so words sharing subwords share directions. Coordinates are ~N(0,1).
std::vector<double> clean_word_embedding(const std::string& word, std::int64_t dim, std::uint64_t seed);

/// Keyword rule: more positive than negative keywords -> 2, fewer -> 0,
/// otherwise 1 (neutral). Matching is case-insensitive on letters only.
int keyword_sentiment(const std::string& sentence);

/// Deterministic templated sentences (movie-review and biography style),
/// all distinct, with sentiment classes drawn uniformly from the seed.
std::vector<std::string> generate_sentences(std::size_t n, std::uint64_t seed);

/// One sample per (sentence, subject): eeg = clean_word_embedding(w) plus
/// N(0, noise_std) noise per coordinate. Subjects are named S1..Sn.
/// Throws ConfigError when dim < 8.
std::vector<EegSample> synth_generate(const std::vector<std::string>& sentences, std::int64_t dim, double noise_std,
                                      std::uint64_t seed, int n_subjects = 1);

}  // namespace belt2
