#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "belt2/data/sample.hpp"

namespace belt2 {

enum class SplitMode { kCrossSentence, kCrossSubject };

SplitMode parse_split_mode(const std::string& s);
std::string split_mode_name(SplitMode m);

struct SplitSpec {
  SplitMode mode = SplitMode::kCrossSentence;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};  // train, val, test
  std::optional<std::string> held_out_subject;
  std::uint64_t seed = 0;
};

struct DataSplits {
  std::vector<EegSample> train, val, test;
};

/// cross_sentence: unique sentence texts are shuffled and partitioned at the
/// given ratios, so a sentence never appears in two subsets.
/// cross_subject: test holds every sample of the held-out subject; the other
/// subjects' sentences are divided between train and val in proportion.
/// Samples keep their input order inside each subset.
/// Throws ConfigError for a malformed spec, EmptySplit if a subset with a
/// nonzero ratio would be empty.
DataSplits split(const std::vector<EegSample>& samples, const SplitSpec& spec);

}  // namespace belt2
