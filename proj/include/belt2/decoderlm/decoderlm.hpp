#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "belt2/bpe/bpe.hpp"
#include "belt2/nn/checkpoint.hpp"
#include "belt2/nn/decode.hpp"
#include "belt2/nn/layers.hpp"

namespace belt2 {

struct LmConfig {
  std::int64_t d_model = 1024;
  std::int64_t n_heads = 8;
  std::int64_t ff_dim = 2048;
  std::int64_t n_layers = 2;
  std::int64_t max_len = 96;
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double dropout = 0.1;
  /// "empty": no conditioning. "denoise": half of the sentences are
  /// conditioned on a corrupted, unordered copy of their own token embeddings.
  std::string conditioning = "empty";
  double denoise_drop = 0.3;

  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// Decoder-only LM over BPE ids with cross-attention to a conditioning
/// sequence of width d_model.
class FrozenLm {
 public:
  FrozenLm(const LmConfig& cfg, const BpeVocab& vocab, std::uint64_t seed);

  const LmConfig& config() const { return cfg_; }
  const BpeVocab& vocab() const { return vocab_; }
  std::int64_t width() const { return cfg_.d_model; }
  ParameterSet& params() { return ps_; }
  const ParameterSet& params() const { return ps_; }
  const TextDecoder& decoder() const { return dec_; }

  void freeze() { ps_.set_frozen(true); }
  bool frozen() const { return ps_.frozen(); }

  /// Teacher-forced logits for BOS + ids.
  Tensor logits(std::span<const std::int64_t> ids, const Tensor& conditioning, const ForwardCtx& ctx) const;

  void save(const std::filesystem::path& dir, CheckpointInfo info) const;
  /// Loads and freezes. Throws CheckpointMismatch.
  static std::unique_ptr<FrozenLm> load(const std::filesystem::path& dir, const BpeVocab& vocab);

 private:
  LmConfig cfg_;
  BpeVocab vocab_;
  std::uint64_t seed_;
  ParameterSet ps_;
  TextDecoder dec_;
};

/// Sum over ids + EOS of -log p, teacher forced, cross-attending to
/// `conditioning` ([0 x d] for none). Throws ShapeMismatch.
Tensor lm_conditioned_nll(const FrozenLm& lm, const Tensor& conditioning, std::span<const std::int64_t> ids,
                          const ForwardCtx& ctx = {});

std::vector<std::int64_t> lm_generate(const FrozenLm& lm, const Tensor& conditioning, const DecodeMode& mode,
                                      std::int64_t max_len);

struct LmPretrainResult {
  std::unique_ptr<FrozenLm> lm;
  std::vector<double> epoch_losses;  // mean per-sentence NLL
};

/// Teacher-forced next-token training on the corpus, then freezes the model.
/// Throws EmptyCorpus.
LmPretrainResult lm_pretrain(const std::vector<std::string>& corpus, const BpeVocab& vocab, const LmConfig& cfg,
                             std::uint64_t seed);

}  // namespace belt2
