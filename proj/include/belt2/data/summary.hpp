#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "belt2/data/sample.hpp"

namespace belt2 {

inline constexpr int kDefaultSummaryWords = 8;

/// Fixed English stopword list (lowercase) used by the summary rule.
const std::vector<std::string>& summary_stopwords();

/// First T whitespace tokens whose letters-only lowercase form is not a
/// stopword, in original order, joined by single spaces. Punctuation attached
/// to a kept token is kept. A sentence with no content words yields its first
/// token. Throws ConfigError when T < 1.
std::string summarize(const std::string& sentence, int T = kDefaultSummaryWords);

std::vector<EegSample> build_summary_targets(std::vector<EegSample> samples, int T = kDefaultSummaryWords);

}  // namespace belt2
