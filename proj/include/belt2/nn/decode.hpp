#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "belt2/nn/layers.hpp"

namespace belt2 {

struct DecodeMode {
  int beam = 0;  // 0 = greedy, otherwise beam width

  static DecodeMode greedy() { return {}; }
  static DecodeMode beam_search(int width) { return {width}; }
  /// "greedy" or "beam:<width>".
  static DecodeMode parse(const std::string& s);
  std::string str() const;
};

/// Autoregressive decoding from BOS with cross-attention to `memory`, in eval
/// mode and without gradient tracking. Stops at EOS (not returned) or after
/// max_len tokens. Beam search keeps the `beam` best partial sequences by
/// total log-probability and returns the finished one with the highest
/// log-probability per token. Ties go to the lower token id.
std::vector<std::int64_t> decode_tokens(const TextDecoder& dec, const Tensor& memory, const DecodeMode& mode,
                                        std::int64_t max_len);

}  // namespace belt2
