#include "belt2/qconformer/qconformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "belt2/error.hpp"

namespace belt2 {

namespace {

std::vector<std::int64_t> positions_for(const Segments& segments) {
  std::vector<std::int64_t> pos;
  for (const auto& [start, len] : segments)
    for (std::int64_t i = 0; i < len; ++i) pos.push_back(i);
  return pos;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void QConformerConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(input_dim > 0 && d_model > 0 && d_code > 0 && d_q > 0 && ff_dim > 0, "model widths must be positive");
  need(n_heads > 0 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  need(d_q % n_heads == 0, "d_q must be divisible by n_heads");
  need(conv_kernel > 0 && conv_kernel % 2 == 1, "conv_kernel must be odd");
  need(codebook_size > 0, "codebook_size must be positive");
  need(n_queries > 0, "n_queries must be positive");
  need(cf_layers > 0 && cross_attn_freq > 0, "cf_layers and cross_attn_freq must be positive");
  need(n_encoder_blocks >= 0 && n_decoder_blocks >= 0 && text_layers >= 0, "block counts must be non-negative");
  need(max_positions >= 2, "max_positions must be >= 2");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  need(vq_temperature > 0.0, "vq_temperature must be positive");
}

nlohmann::json QConformerConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"ff_dim", ff_dim},
          {"conv_kernel", conv_kernel},
          {"n_encoder_blocks", n_encoder_blocks},
          {"n_decoder_blocks", n_decoder_blocks},
          {"dropout", dropout},
          {"codebook_size", codebook_size},
          {"d_code", d_code},
          {"n_queries", n_queries},
          {"d_q", d_q},
          {"cf_layers", cf_layers},
          {"cross_attn_freq", cross_attn_freq},
          {"text_layers", text_layers},
          {"max_positions", max_positions},
          {"vq_temperature", vq_temperature}};
}

QConformerConfig QConformerConfig::from_json(const nlohmann::json& j) {
  QConformerConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "input_dim") c.input_dim = v.get<std::int64_t>();
      else if (k == "d_model") c.d_model = v.get<std::int64_t>();
      else if (k == "n_heads") c.n_heads = v.get<std::int64_t>();
      else if (k == "ff_dim") c.ff_dim = v.get<std::int64_t>();
      else if (k == "conv_kernel") c.conv_kernel = v.get<std::int64_t>();
      else if (k == "n_encoder_blocks") c.n_encoder_blocks = v.get<std::int64_t>();
      else if (k == "n_decoder_blocks") c.n_decoder_blocks = v.get<std::int64_t>();
      else if (k == "dropout") c.dropout = v.get<double>();
      else if (k == "codebook_size") c.codebook_size = v.get<std::int64_t>();
      else if (k == "d_code") c.d_code = v.get<std::int64_t>();
      else if (k == "n_queries") c.n_queries = v.get<std::int64_t>();
      else if (k == "d_q") c.d_q = v.get<std::int64_t>();
      else if (k == "cf_layers") c.cf_layers = v.get<std::int64_t>();
      else if (k == "cross_attn_freq") c.cross_attn_freq = v.get<std::int64_t>();
      else if (k == "text_layers") c.text_layers = v.get<std::int64_t>();
      else if (k == "max_positions") c.max_positions = v.get<std::int64_t>();
      else if (k == "vq_temperature") c.vq_temperature = v.get<double>();
      else throw ConfigError("unknown model key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

QuantizeResult quantize(const Tensor& codebook, const Tensor& h, double temperature) {
  const auto V = codebook.rows();
  if (codebook.numel() == 0 || V == 0) throw EmptyCodebook("codebook has no entries");
  if (codebook.cols() != h.cols()) {
    throw ShapeMismatch("codebook width " + std::to_string(codebook.cols()) + " vs token width " +
                        std::to_string(h.cols()));
  }
  const Tensor dist = sq_dist(h, codebook);
  const auto& dv = dist.data();
  QuantizeResult r;
  r.counts.assign(static_cast<std::size_t>(V), 0);
  r.indices.resize(static_cast<std::size_t>(h.rows()));
  for (std::int64_t i = 0; i < h.rows(); ++i) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < V; ++k)
      if (dv[i * V + k] < dv[i * V + best]) best = k;
    r.indices[i] = best;
    ++r.counts[best];
  }
  r.codes = gather_rows(codebook, r.indices);
  r.z_q = straight_through(h, r.codes);
  r.usage = reshape(mean_rows(softmax_rows(scale(dist, -1.0 / temperature))), {V});
  return r;
}

double usage_entropy(const std::vector<std::int64_t>& counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (n == 0.0) return 0.0;
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

PackedBatch pack_samples(const std::vector<const EegSample*>& samples, std::int64_t dim) {
  PackedBatch b;
  std::vector<double> values;
  std::int64_t rows = 0;
  for (const auto* s : samples) {
    if (s->dim() != dim) {
      throw DimMismatch("sample " + s->id + " has width " + std::to_string(s->dim()) + ", model expects " +
                        std::to_string(dim));
    }
    b.segments.emplace_back(rows, s->length());
    for (const auto& w : s->words) values.insert(values.end(), w.eeg.begin(), w.eeg.end());
    rows += s->length();
  }
  b.e = Tensor::from({rows, dim}, std::move(values));
  return b;
}

std::int64_t verbalizer_offset(const BpeVocab& vocab) {
  const auto off = vocab.id_of(kVerbalizers.front());
  for (std::size_t c = 0; c < kVerbalizers.size(); ++c) {
    if (off < 0 || vocab.id_of(kVerbalizers[c]) != off + static_cast<std::int64_t>(c)) {
      throw ConfigError("vocabulary lacks contiguous sentiment verbalizer tokens");
    }
  }
  return off;
}

QConformer::QConformer(const QConformerConfig& cfg, const BpeVocab& vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(vocab), seed_(seed) {
  cfg_.validate();
  verbalizer_offset(vocab_);
  Rng rng = Rng(seed).fork("qconformer");
  ConformerBlockConfig bc{cfg.d_model, cfg.n_heads, cfg.ff_dim, cfg.conv_kernel};

  in_proj_ = Linear::create(ps_, "encoder.in_proj", cfg.input_dim, cfg.d_model, rng);
  enc_pos_ = Embedding::create(ps_, "encoder.positions", cfg.max_positions, cfg.d_model, rng);
  for (std::int64_t i = 0; i < cfg.n_encoder_blocks; ++i)
    encoder_.push_back(ConformerBlock::create(ps_, "encoder.block" + std::to_string(i), bc, rng));
  to_code_ = Linear::create(ps_, "encoder.to_code", cfg.d_model, cfg.d_code, rng);
  codebook_ = ps_.add_normal("codebook", {cfg.codebook_size, cfg.d_code}, 1.0, rng);
  from_code_ = Linear::create(ps_, "decoder.from_code", cfg.d_code, cfg.d_model, rng);
  for (std::int64_t i = 0; i < cfg.n_decoder_blocks; ++i)
    decoder_.push_back(ConformerBlock::create(ps_, "decoder.block" + std::to_string(i), bc, rng));
  out_proj_ = Linear::create(ps_, "decoder.out_proj", cfg.d_model, cfg.input_dim, rng);

  cf_in_ = Linear::create(ps_, "cformer.in_proj", cfg.d_code, cfg.d_q, rng);
  cf_pos_ = Embedding::create(ps_, "cformer.positions", cfg.max_positions, cfg.d_q, rng);
  for (std::int64_t i = 0; i < cfg.cf_layers; ++i) {
    const bool cross = (i + 1) % cfg.cross_attn_freq == 0;
    cformer_.push_back(AttentionBlock::create(ps_, "cformer.layer" + std::to_string(i), cfg.d_q, cfg.n_heads,
                                              cfg.ff_dim, /*causal=*/false, cross, rng));
  }
  cf_ln_ = LayerNorm::create(ps_, "cformer.ln", cfg.d_q);

  TextDecoderConfig tc{vocab_.size(), cfg.d_q, cfg.n_heads, cfg.ff_dim, cfg.text_layers, cfg.max_positions};
  text_ = TextDecoder::create(ps_, "text", tc, rng);
}

Tensor QConformer::encode_continuous(const PackedBatch& batch, const ForwardCtx& ctx) const {
  if (batch.e.cols() != cfg_.input_dim) {
    throw DimMismatch("EEG width " + std::to_string(batch.e.cols()) + ", model expects " +
                      std::to_string(cfg_.input_dim));
  }
  for (const auto& [start, len] : batch.segments) {
    if (len > cfg_.max_positions) throw ShapeMismatch("sequence longer than max_positions");
  }
  const auto pos = positions_for(batch.segments);
  Tensor x = apply_dropout(add(in_proj_(batch.e), enc_pos_(pos)), ctx);
  for (const auto& b : encoder_) x = b.forward(x, batch.segments, ctx);
  return to_code_(x);
}

QuantizeResult QConformer::quantize(const Tensor& h) const { return belt2::quantize(codebook_, h, cfg_.vq_temperature); }

Tensor QConformer::reconstruct(const Tensor& z_q, const Segments& segments, const ForwardCtx& ctx) const {
  if (z_q.cols() != cfg_.d_code) throw ShapeMismatch("reconstruct expects width " + std::to_string(cfg_.d_code));
  const auto pos = positions_for(segments);
  if (static_cast<std::int64_t>(pos.size()) != z_q.rows()) throw ShapeMismatch("segments do not cover z_q rows");
  Tensor x = add(from_code_(z_q), enc_pos_(pos));
  for (const auto& b : decoder_) x = b.forward(x, segments, ctx);
  return out_proj_(x);
}

Tensor QConformer::prompt(const std::string& task) const {
  auto it = prompts_.find(task);
  if (it == prompts_.end()) throw UnknownTask("task '" + task + "' is not registered");
  return it->second;
}

Tensor QConformer::mlc(const std::string& task, const Tensor& z_q, const ForwardCtx& ctx) const {
  Tensor x = prompt(task);
  if (z_q.rows() > cfg_.max_positions) throw ShapeMismatch("sequence longer than max_positions");
  std::vector<std::int64_t> pos(static_cast<std::size_t>(z_q.rows()));
  std::iota(pos.begin(), pos.end(), 0);
  const Tensor memory = add(cf_in_(z_q), cf_pos_(pos));
  for (const auto& layer : cformer_) x = layer.forward(x, memory, ctx);
  return cf_ln_(x);
}

Tensor QConformer::text_logits(const Tensor& mlc, std::span<const std::int64_t> ids, const ForwardCtx& ctx) const {
  std::vector<std::int64_t> input{kBosId};
  input.insert(input.end(), ids.begin(), ids.end());
  if (static_cast<std::int64_t>(input.size()) > cfg_.max_positions) input.resize(cfg_.max_positions);
  return text_.logits(input, mlc, ctx);
}

std::vector<std::int64_t> QConformer::decode_text(const Tensor& mlc, const DecodeMode& mode,
                                                  std::int64_t max_len) const {
  return decode_tokens(text_, mlc, mode, max_len);
}

Tensor QConformer::sentiment_probs(const Tensor& mlc) const {
  const Tensor logits = text_.project(slice_rows(mlc, mlc.rows() - 1, 1));
  return softmax_rows(slice_cols(logits, verbalizer_offset(vocab_), static_cast<std::int64_t>(kVerbalizers.size())));
}

SentimentPrediction QConformer::classify_sentiment(const Tensor& mlc) const {
  NoGradScope no_grad;
  SentimentPrediction p;
  p.probs = sentiment_probs(mlc).to_vector();
  p.label = static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  return p;
}

Tensor QConformer::register_task(const std::string& task) {
  if (std::find(kTaskNames.begin(), kTaskNames.end(), task) == kTaskNames.end()) {
    throw UnknownTask("unknown task '" + task + "'");
  }
  if (has_task(task)) throw DuplicateTask("task '" + task + "' already registered");
  Rng rng = Rng(seed_).fork("prompt").fork(task);
  Tensor q = ps_.add_normal("prompt." + task, {cfg_.n_queries, cfg_.d_q}, 0.02, rng);
  q.set_requires_grad(true);
  prompts_.emplace(task, q);
  task_order_.push_back(task);
  return q;
}

std::vector<std::string> QConformer::tasks() const { return task_order_; }

void QConformer::save(const std::filesystem::path& dir, CheckpointInfo info) const {
  info.config = cfg_.to_json();
  info.seed = seed_;
  info.extra["tasks"] = task_order_;
  info.extra["vocab_hash"] = hex(vocab_.hash());
  info.extra["kind"] = "qconformer";
  save_checkpoint(dir, ps_, info);
}

std::unique_ptr<QConformer> QConformer::load(const std::filesystem::path& dir, const BpeVocab& vocab) {
  const auto info = read_checkpoint_info(dir);
  if (info.extra.value("kind", "") != "qconformer") throw CheckpointMismatch(dir.string() + " is not an encoder checkpoint");
  if (info.extra.value("vocab_hash", "") != hex(vocab.hash())) {
    throw CheckpointMismatch("vocabulary does not match the one the checkpoint was trained with");
  }
  QConformerConfig cfg;
  try {
    cfg = QConformerConfig::from_json(info.config);
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(e.what());
  }
  auto model = std::make_unique<QConformer>(cfg, vocab, info.seed);
  for (const auto& t : info.extra.value("tasks", std::vector<std::string>{})) model->register_task(t);
  load_checkpoint_params(dir, model->params());
  return model;
}

}  // namespace belt2
