#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "belt2/nn/params.hpp"
#include "belt2/numcore/ops.hpp"

namespace belt2 {

/// Per-call execution mode. Dropout and batch statistics only apply when
/// `train` is set; `rng` must then be non-null if dropout > 0.
struct ForwardCtx {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

Tensor apply_dropout(const Tensor& x, const ForwardCtx& ctx);

/// Row ranges of a packed batch: (first row, length) per sequence.
using Segments = std::vector<std::pair<std::int64_t, std::int64_t>>;

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when created without bias

  static Linear create(ParameterSet& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
                       bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  static LayerNorm create(ParameterSet& ps, const std::string& name, std::int64_t d, double eps = 1e-5);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

struct Embedding {
  Tensor table;  // [n x d]

  static Embedding create(ParameterSet& ps, const std::string& name, std::int64_t n, std::int64_t d, Rng& rng);
  Tensor operator()(std::span<const std::int64_t> ids) const { return gather_rows(table, ids); }
};

/// Linear -> GELU -> dropout -> Linear.
struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward create(ParameterSet& ps, const std::string& name, std::int64_t d, std::int64_t hidden, Rng& rng);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::int64_t heads = 1;

  static MultiHeadAttention create(ParameterSet& ps, const std::string& name, std::int64_t d, std::int64_t heads,
                                   Rng& rng);
  /// query [Tq x d] attends over memory [Tk x d]. Causal masking requires
  /// Tq == Tk and hides future positions.
  Tensor forward(const Tensor& query, const Tensor& memory, bool causal) const;
};

/// Running statistics are buffers (non-trainable parameters) so they are
/// checkpointed with the weights.
struct BatchNorm1d {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm1d create(ParameterSet& ps, const std::string& name, std::int64_t channels);
  /// Train: batch statistics over all rows, running stats updated in place.
  /// Eval: running statistics.
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;
};

/// LayerNorm -> pointwise(C -> 2C) -> GLU -> depthwise(k) -> BatchNorm -> SiLU
/// -> pointwise(C -> C) -> dropout. The depthwise convolution never crosses
/// segment boundaries.
struct ConvModule {
  LayerNorm ln;
  Linear pointwise_in;
  Tensor depthwise_kernel;  // [k x C]
  Tensor depthwise_bias;    // [C]
  BatchNorm1d bn;
  Linear pointwise_out;

  static ConvModule create(ParameterSet& ps, const std::string& name, std::int64_t channels, std::int64_t kernel,
                           Rng& rng);
  Tensor forward(const Tensor& x, const Segments& segments, const ForwardCtx& ctx) const;
};

struct ConformerBlockConfig {
  std::int64_t d_model = 840;
  std::int64_t n_heads = 8;
  std::int64_t ff_dim = 2048;
  std::int64_t conv_kernel = 31;
  double ln_eps = 1e-5;
};

/// x += 1/2 FF(LN x); x += MHSA(LN x); x += Conv(x); x += 1/2 FF(LN x); y = LN x.
struct ConformerBlock {
  LayerNorm ln_ff1;
  FeedForward ff1;
  LayerNorm ln_attn;
  MultiHeadAttention attn;
  ConvModule conv;
  LayerNorm ln_ff2;
  FeedForward ff2;
  LayerNorm ln_out;

  static ConformerBlock create(ParameterSet& ps, const std::string& name, const ConformerBlockConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, const Segments& segments, const ForwardCtx& ctx) const;
};

/// Pre-LN transformer block: self-attention, optional cross-attention to a
/// memory sequence, feed-forward. An empty (0-row) memory skips the
/// cross-attention sublayer.
struct AttentionBlock {
  LayerNorm ln_self;
  MultiHeadAttention self_attn;
  bool has_cross = false;
  LayerNorm ln_cross;
  MultiHeadAttention cross_attn;
  LayerNorm ln_ff;
  FeedForward ff;
  bool causal = true;

  static AttentionBlock create(ParameterSet& ps, const std::string& name, std::int64_t d, std::int64_t heads,
                               std::int64_t ff_dim, bool causal, bool has_cross, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& memory, const ForwardCtx& ctx) const;
};

struct TextDecoderConfig {
  std::int64_t vocab_size = 0;
  std::int64_t d_model = 0;
  std::int64_t n_heads = 1;
  std::int64_t ff_dim = 0;
  std::int64_t n_layers = 2;
  std::int64_t max_len = 96;
};

/// Autoregressive decoder over BPE ids that cross-attends to a memory
/// sequence. Shared by the encoder's text head and the frozen LM.
struct TextDecoder {
  TextDecoderConfig cfg;
  Embedding tokens;
  Embedding positions;
  std::vector<AttentionBlock> blocks;
  LayerNorm ln_final;
  Linear head;

  static TextDecoder create(ParameterSet& ps, const std::string& name, const TextDecoderConfig& cfg, Rng& rng);
  /// Final-block hidden states [T x d] for input ids [T].
  Tensor hidden(std::span<const std::int64_t> ids, const Tensor& memory, const ForwardCtx& ctx) const;
  /// Logits [T x vocab] for input ids [T].
  Tensor logits(std::span<const std::int64_t> ids, const Tensor& memory, const ForwardCtx& ctx) const {
    return project(hidden(ids, memory, ctx));
  }
  /// LM head (with final norm) applied to arbitrary hidden rows.
  Tensor project(const Tensor& hidden) const { return head(ln_final(hidden)); }
};

/// Zero-row [0 x d] tensor used as "no conditioning".
Tensor empty_memory(std::int64_t d);

}  // namespace belt2
