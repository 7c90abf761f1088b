#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "belt2/bpe/bpe.hpp"
#include "belt2/data/sample.hpp"
#include "belt2/nn/checkpoint.hpp"
#include "belt2/nn/decode.hpp"
#include "belt2/nn/layers.hpp"
#include "belt2/nn/params.hpp"

namespace belt2 {

inline const std::vector<std::string> kTaskNames = {"translation", "summary", "sentiment"};
/// Verbalizer tokens appended to the BPE specials, one per sentiment class.
inline const std::vector<std::string> kVerbalizers = {"<c0>", "<c1>", "<c2>"};

struct QConformerConfig {
  std::int64_t input_dim = 840;  // D
  std::int64_t d_model = 840;
  std::int64_t n_heads = 8;
  std::int64_t ff_dim = 2048;
  std::int64_t conv_kernel = 31;
  std::int64_t n_encoder_blocks = 2;
  std::int64_t n_decoder_blocks = 2;
  double dropout = 0.1;
  std::int64_t codebook_size = 1024;
  std::int64_t d_code = 1024;
  std::int64_t n_queries = 20;
  std::int64_t d_q = 1024;
  std::int64_t cf_layers = 4;
  std::int64_t cross_attn_freq = 1;
  std::int64_t text_layers = 2;
  std::int64_t max_positions = 96;
  double vq_temperature = 1.0;

  /// Throws ConfigError on inconsistent widths, heads or kernel.
  void validate() const;
  nlohmann::json to_json() const;
  static QConformerConfig from_json(const nlohmann::json& j);
};

struct QuantizeResult {
  Tensor z_q;     // straight-through output: values of `codes`, gradient to h
  Tensor codes;   // gathered codebook rows, gradient to the codebook
  std::vector<std::int64_t> indices;
  Tensor usage;   // soft usage p_k [|V|], sums to 1
  std::vector<std::int64_t> counts;  // hard usage per entry
};

/// Nearest codebook row per row of h under squared Euclidean distance, ties
/// to the lowest index. Soft usage is the row mean of softmax(-dist / tau).
/// Throws EmptyCodebook, ShapeMismatch.
QuantizeResult quantize(const Tensor& codebook, const Tensor& h, double temperature = 1.0);

/// Entropy (nats) of a hard usage histogram.
double usage_entropy(const std::vector<std::int64_t>& counts);

struct PackedBatch {
  Tensor e;  // [sum L x D]
  Segments segments;
};

PackedBatch pack_samples(const std::vector<const EegSample*>& samples, std::int64_t dim);

struct SentimentPrediction {
  int label = 0;
  std::vector<double> probs;
};

class QConformer {
 public:
  QConformer(const QConformerConfig& cfg, const BpeVocab& vocab, std::uint64_t seed);

  const QConformerConfig& config() const { return cfg_; }
  const BpeVocab& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  ParameterSet& params() { return ps_; }
  const ParameterSet& params() const { return ps_; }

  /// Continuous tokens h [rows x d_code] for a packed batch.
  Tensor encode_continuous(const PackedBatch& batch, const ForwardCtx& ctx) const;
  QuantizeResult quantize(const Tensor& h) const;
  /// ê [rows x D] from (packed) quantized tokens.
  Tensor reconstruct(const Tensor& z_q, const Segments& segments, const ForwardCtx& ctx) const;

  /// Mid-layer coding [n_q x d_q] of one sequence of quantized tokens.
  Tensor mlc(const std::string& task, const Tensor& z_q, const ForwardCtx& ctx) const;
  /// Quantized tokens mapped into the query width (also used by BPE-CL).
  Tensor to_query_space(const Tensor& z_q) const { return cf_in_(z_q); }
  /// BPE subword embeddings [n x d_q].
  Tensor subword_embeddings(std::span<const std::int64_t> ids) const { return text_.tokens(ids); }

  /// Teacher-forced logits for BOS + ids, predicting ids + EOS.
  Tensor text_logits(const Tensor& mlc, std::span<const std::int64_t> ids, const ForwardCtx& ctx) const;
  std::vector<std::int64_t> decode_text(const Tensor& mlc, const DecodeMode& mode, std::int64_t max_len) const;
  /// Probabilities [1 x |C|]: the shared LM head on the last MLC row,
  /// softmax restricted to the verbalizer tokens.
  Tensor sentiment_probs(const Tensor& mlc) const;
  SentimentPrediction classify_sentiment(const Tensor& mlc) const;

  /// Adds a prompt [n_q x d_q] initialized N(0, 0.02) from a seed derived from
  /// the model seed and the task name. Throws DuplicateTask, UnknownTask.
  Tensor register_task(const std::string& task);
  bool has_task(const std::string& task) const { return prompts_.contains(task); }
  std::vector<std::string> tasks() const;
  Tensor prompt(const std::string& task) const;

  const Tensor& codebook() const { return codebook_; }
  const TextDecoder& text_decoder() const { return text_; }

  /// Writes the checkpoint; the manifest records config, tasks and vocab hash.
  void save(const std::filesystem::path& dir, CheckpointInfo info) const;
  /// Rebuilds the model from a checkpoint directory. Throws CheckpointMismatch
  /// when the vocab hash or parameters disagree.
  static std::unique_ptr<QConformer> load(const std::filesystem::path& dir, const BpeVocab& vocab);

 private:
  QConformerConfig cfg_;
  BpeVocab vocab_;
  std::uint64_t seed_;
  ParameterSet ps_;

  Linear in_proj_;
  Embedding enc_pos_;
  std::vector<ConformerBlock> encoder_;
  Linear to_code_;
  Tensor codebook_;
  Linear from_code_;
  std::vector<ConformerBlock> decoder_;
  Linear out_proj_;
  Linear cf_in_;
  Embedding cf_pos_;
  std::vector<AttentionBlock> cformer_;
  LayerNorm cf_ln_;
  TextDecoder text_;
  std::map<std::string, Tensor> prompts_;
  std::vector<std::string> task_order_;
};

/// The verbalizer ids must be contiguous right after the four base specials.
std::int64_t verbalizer_offset(const BpeVocab& vocab);

}  // namespace belt2
