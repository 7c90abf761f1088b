#include "belt2/nn/layers.hpp"

#include <cmath>
#include <numeric>

#include "belt2/error.hpp"

namespace belt2 {

Tensor apply_dropout(const Tensor& x, const ForwardCtx& ctx) {
  if (!ctx.train || ctx.dropout <= 0.0) return x;
  if (!ctx.rng) throw ConfigError("dropout requested without an rng");
  return dropout(x, ctx.dropout, *ctx.rng);
}

Tensor empty_memory(std::int64_t d) { return Tensor::from({0, d}, {}); }

Linear Linear::create(ParameterSet& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = ps.add_normal(name + ".weight", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (with_bias) l.bias = ps.add_constant(name + ".bias", {out}, 0.0);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, std::int64_t d, double eps) {
  LayerNorm ln;
  ln.gain = ps.add_constant(name + ".gain", {d}, 1.0);
  ln.bias = ps.add_constant(name + ".bias", {d}, 0.0);
  ln.eps = eps;
  return ln;
}

Embedding Embedding::create(ParameterSet& ps, const std::string& name, std::int64_t n, std::int64_t d, Rng& rng) {
  Embedding e;
  e.table = ps.add_normal(name, {n, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return e;
}

FeedForward FeedForward::create(ParameterSet& ps, const std::string& name, std::int64_t d, std::int64_t hidden,
                                Rng& rng) {
  return {Linear::create(ps, name + ".up", d, hidden, rng), Linear::create(ps, name + ".down", hidden, d, rng)};
}

Tensor FeedForward::forward(const Tensor& x, const ForwardCtx& ctx) const {
  return down(apply_dropout(gelu(up(x)), ctx));
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& ps, const std::string& name, std::int64_t d,
                                              std::int64_t heads, Rng& rng) {
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.q = Linear::create(ps, name + ".q", d, d, rng);
  a.k = Linear::create(ps, name + ".k", d, d, rng);
  a.v = Linear::create(ps, name + ".v", d, d, rng);
  a.o = Linear::create(ps, name + ".o", d, d, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& memory, bool causal) const {
  if (causal && query.rows() != memory.rows()) throw ShapeMismatch("causal attention needs a square score matrix");
  const Tensor qs = q(query);
  const Tensor ks = k(memory);
  const Tensor vs = v(memory);
  const auto d = qs.cols();
  const auto dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(qs, h * dh, dh);
    const Tensor kh = slice_cols(ks, h * dh, dh);
    const Tensor vh = slice_cols(vs, h * dh, dh);
    const Tensor probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), causal);
    outs.push_back(matmul(probs, vh));
  }
  return o(heads == 1 ? outs.front() : concat_cols(outs));
}

BatchNorm1d BatchNorm1d::create(ParameterSet& ps, const std::string& name, std::int64_t channels) {
  BatchNorm1d bn;
  bn.gamma = ps.add_constant(name + ".gamma", {channels}, 1.0);
  bn.beta = ps.add_constant(name + ".beta", {channels}, 0.0);
  bn.running_mean = ps.add_constant(name + ".running_mean", {channels}, 0.0, /*trainable=*/false);
  bn.running_var = ps.add_constant(name + ".running_var", {channels}, 1.0, /*trainable=*/false);
  return bn;
}

Tensor BatchNorm1d::forward(const Tensor& x, const ForwardCtx& ctx) const {
  const auto c = x.cols();
  if (ctx.train) {
    std::vector<double> mu, var;
    Tensor y = batch_norm(x, gamma, beta, eps, &mu, &var);
    Tensor rm = running_mean;
    Tensor rv = running_var;
    const Precision p = precision();
    const double n = static_cast<double>(x.rows());
    auto m = rm.mutable_data();
    auto v = rv.mutable_data();
    for (std::int64_t j = 0; j < c; ++j) {
      const double unbiased = n > 1.0 ? var[j] * n / (n - 1.0) : var[j];
      m[j] = round_to_precision((1.0 - momentum) * m[j] + momentum * mu[j], p);
      v[j] = round_to_precision((1.0 - momentum) * v[j] + momentum * unbiased, p);
    }
    return y;
  }
  std::vector<double> shift(static_cast<std::size_t>(c)), inv(static_cast<std::size_t>(c));
  for (std::int64_t j = 0; j < c; ++j) {
    shift[j] = -running_mean.data()[j];
    inv[j] = 1.0 / std::sqrt(running_var.data()[j] + eps);
  }
  Tensor normed = mul_row(add_row(x, Tensor::from({c}, std::move(shift))), Tensor::from({c}, std::move(inv)));
  return add_row(mul_row(normed, gamma), beta);
}

ConvModule ConvModule::create(ParameterSet& ps, const std::string& name, std::int64_t channels, std::int64_t kernel,
                              Rng& rng) {
  if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("conv_kernel must be odd, got " + std::to_string(kernel));
  ConvModule m;
  m.ln = LayerNorm::create(ps, name + ".ln", channels);
  m.pointwise_in = Linear::create(ps, name + ".pointwise_in", channels, 2 * channels, rng);
  m.depthwise_kernel =
      ps.add_normal(name + ".depthwise.kernel", {kernel, channels}, 1.0 / std::sqrt(static_cast<double>(kernel)), rng);
  m.depthwise_bias = ps.add_constant(name + ".depthwise.bias", {channels}, 0.0);
  m.bn = BatchNorm1d::create(ps, name + ".bn", channels);
  m.pointwise_out = Linear::create(ps, name + ".pointwise_out", channels, channels, rng);
  return m;
}

Tensor ConvModule::forward(const Tensor& x, const Segments& segments, const ForwardCtx& ctx) const {
  const Tensor gated = glu(pointwise_in(ln(x)));
  std::vector<Tensor> parts;
  parts.reserve(segments.size());
  for (const auto& [start, len] : segments) parts.push_back(depthwise_conv1d(slice_rows(gated, start, len), depthwise_kernel));
  const Tensor conv = add_row(parts.size() == 1 ? parts.front() : concat_rows(parts), depthwise_bias);
  return apply_dropout(pointwise_out(silu(bn.forward(conv, ctx))), ctx);
}

ConformerBlock ConformerBlock::create(ParameterSet& ps, const std::string& name, const ConformerBlockConfig& cfg,
                                      Rng& rng) {
  ConformerBlock b;
  b.ln_ff1 = LayerNorm::create(ps, name + ".ln_ff1", cfg.d_model, cfg.ln_eps);
  b.ff1 = FeedForward::create(ps, name + ".ff1", cfg.d_model, cfg.ff_dim, rng);
  b.ln_attn = LayerNorm::create(ps, name + ".ln_attn", cfg.d_model, cfg.ln_eps);
  b.attn = MultiHeadAttention::create(ps, name + ".attn", cfg.d_model, cfg.n_heads, rng);
  b.conv = ConvModule::create(ps, name + ".conv", cfg.d_model, cfg.conv_kernel, rng);
  b.ln_ff2 = LayerNorm::create(ps, name + ".ln_ff2", cfg.d_model, cfg.ln_eps);
  b.ff2 = FeedForward::create(ps, name + ".ff2", cfg.d_model, cfg.ff_dim, rng);
  b.ln_out = LayerNorm::create(ps, name + ".ln_out", cfg.d_model, cfg.ln_eps);
  return b;
}

Tensor ConformerBlock::forward(const Tensor& x, const Segments& segments, const ForwardCtx& ctx) const {
  const auto d = ln_ff1.gain.numel();
  if (x.cols() != d) throw ShapeMismatch("conformer block expects width " + std::to_string(d) + ", got " + shape_str(x.shape()));
  Tensor y = add(x, scale(apply_dropout(ff1.forward(ln_ff1(x), ctx), ctx), 0.5));

  const Tensor normed = ln_attn(y);
  std::vector<Tensor> attended;
  attended.reserve(segments.size());
  for (const auto& [start, len] : segments) {
    const Tensor seg = slice_rows(normed, start, len);
    attended.push_back(attn.forward(seg, seg, /*causal=*/false));
  }
  y = add(y, apply_dropout(attended.size() == 1 ? attended.front() : concat_rows(attended), ctx));

  y = add(y, conv.forward(y, segments, ctx));
  y = add(y, scale(apply_dropout(ff2.forward(ln_ff2(y), ctx), ctx), 0.5));
  return ln_out(y);
}

AttentionBlock AttentionBlock::create(ParameterSet& ps, const std::string& name, std::int64_t d, std::int64_t heads,
                                      std::int64_t ff_dim, bool causal, bool has_cross, Rng& rng) {
  AttentionBlock b;
  b.ln_self = LayerNorm::create(ps, name + ".ln_self", d);
  b.self_attn = MultiHeadAttention::create(ps, name + ".self_attn", d, heads, rng);
  b.has_cross = has_cross;
  if (has_cross) {
    b.ln_cross = LayerNorm::create(ps, name + ".ln_cross", d);
    b.cross_attn = MultiHeadAttention::create(ps, name + ".cross_attn", d, heads, rng);
  }
  b.ln_ff = LayerNorm::create(ps, name + ".ln_ff", d);
  b.ff = FeedForward::create(ps, name + ".ff", d, ff_dim, rng);
  b.causal = causal;
  return b;
}

Tensor AttentionBlock::forward(const Tensor& x, const Tensor& memory, const ForwardCtx& ctx) const {
  const Tensor s = ln_self(x);
  Tensor y = add(x, apply_dropout(self_attn.forward(s, s, causal), ctx));
  if (has_cross && memory.defined() && memory.rows() > 0) {
    if (memory.cols() != x.cols()) {
      throw ShapeMismatch("cross-attention memory width " + std::to_string(memory.cols()) + " vs model width " +
                          std::to_string(x.cols()));
    }
    y = add(y, apply_dropout(cross_attn.forward(ln_cross(y), memory, /*causal=*/false), ctx));
  }
  return add(y, apply_dropout(ff.forward(ln_ff(y), ctx), ctx));
}

TextDecoder TextDecoder::create(ParameterSet& ps, const std::string& name, const TextDecoderConfig& cfg, Rng& rng) {
  if (cfg.vocab_size <= 0) throw ConfigError("text decoder needs a vocabulary");
  TextDecoder t;
  t.cfg = cfg;
  t.tokens = Embedding::create(ps, name + ".tokens", cfg.vocab_size, cfg.d_model, rng);
  t.positions = Embedding::create(ps, name + ".positions", cfg.max_len, cfg.d_model, rng);
  for (std::int64_t i = 0; i < cfg.n_layers; ++i) {
    t.blocks.push_back(AttentionBlock::create(ps, name + ".block" + std::to_string(i), cfg.d_model, cfg.n_heads,
                                              cfg.ff_dim, /*causal=*/true, /*has_cross=*/true, rng));
  }
  t.ln_final = LayerNorm::create(ps, name + ".ln_final", cfg.d_model);
  t.head = Linear::create(ps, name + ".head", cfg.d_model, cfg.vocab_size, rng);
  return t;
}

Tensor TextDecoder::hidden(std::span<const std::int64_t> ids, const Tensor& memory, const ForwardCtx& ctx) const {
  const auto n = static_cast<std::int64_t>(ids.size());
  if (n == 0) throw ShapeMismatch("text decoder needs at least one input id");
  if (n > cfg.max_len) {
    throw ShapeMismatch("sequence of " + std::to_string(n) + " ids exceeds max_len " + std::to_string(cfg.max_len));
  }
  std::vector<std::int64_t> pos(static_cast<std::size_t>(n));
  std::iota(pos.begin(), pos.end(), 0);
  Tensor x = apply_dropout(add(tokens(ids), positions(pos)), ctx);
  for (const auto& b : blocks) x = b.forward(x, memory, ctx);
  return x;
}

}  // namespace belt2
