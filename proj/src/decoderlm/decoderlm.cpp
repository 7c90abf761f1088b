#include "belt2/decoderlm/decoderlm.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "belt2/error.hpp"
#include "belt2/numcore/optim.hpp"
#include "belt2/objectives/objectives.hpp"

namespace belt2 {

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void LmConfig::validate() const {
  if (d_model <= 0 || ff_dim <= 0 || n_layers < 0 || max_len < 2) throw ConfigError("invalid LM widths");
  if (n_heads <= 0 || d_model % n_heads != 0) throw ConfigError("LM d_model must be divisible by n_heads");
  if (epochs < 0 || batch_size < 1 || lr <= 0.0) throw ConfigError("invalid LM training settings");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("LM dropout must be in [0, 1)");
  if (conditioning != "empty" && conditioning != "denoise") {
    throw ConfigError("lm.conditioning must be 'empty' or 'denoise'");
  }
}

nlohmann::json LmConfig::to_json() const {
  return {{"d_model", d_model},   {"n_heads", n_heads},       {"ff_dim", ff_dim},
          {"n_layers", n_layers}, {"max_len", max_len},       {"epochs", epochs},
          {"batch_size", batch_size}, {"lr", lr},             {"weight_decay", weight_decay},
          {"dropout", dropout},   {"conditioning", conditioning}, {"denoise_drop", denoise_drop}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "d_model") c.d_model = v.get<std::int64_t>();
      else if (k == "n_heads") c.n_heads = v.get<std::int64_t>();
      else if (k == "ff_dim") c.ff_dim = v.get<std::int64_t>();
      else if (k == "n_layers") c.n_layers = v.get<std::int64_t>();
      else if (k == "max_len") c.max_len = v.get<std::int64_t>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "dropout") c.dropout = v.get<double>();
      else if (k == "conditioning") c.conditioning = v.get<std::string>();
      else if (k == "denoise_drop") c.denoise_drop = v.get<double>();
      else throw ConfigError("unknown lm key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("lm config: ") + e.what());
  }
  return c;
}

FrozenLm::FrozenLm(const LmConfig& cfg, const BpeVocab& vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(vocab), seed_(seed) {
  cfg_.validate();
  Rng rng = Rng(seed).fork("lm");
  dec_ = TextDecoder::create(ps_, "lm",
                             {vocab_.size(), cfg.d_model, cfg.n_heads, cfg.ff_dim, cfg.n_layers, cfg.max_len}, rng);
}

Tensor FrozenLm::logits(std::span<const std::int64_t> ids, const Tensor& conditioning, const ForwardCtx& ctx) const {
  if (conditioning.defined() && conditioning.rows() > 0 && conditioning.cols() != cfg_.d_model) {
    throw ShapeMismatch("conditioning width " + std::to_string(conditioning.cols()) + " vs LM width " +
                        std::to_string(cfg_.d_model));
  }
  std::vector<std::int64_t> input{kBosId};
  input.insert(input.end(), ids.begin(), ids.end());
  if (static_cast<std::int64_t>(input.size()) > cfg_.max_len) input.resize(cfg_.max_len);
  return dec_.logits(input, conditioning.defined() ? conditioning : empty_memory(cfg_.d_model), ctx);
}

void FrozenLm::save(const std::filesystem::path& dir, CheckpointInfo info) const {
  info.config = cfg_.to_json();
  info.seed = seed_;
  info.extra["kind"] = "lm";
  info.extra["vocab_hash"] = hex(vocab_.hash());
  save_checkpoint(dir, ps_, info);
}

std::unique_ptr<FrozenLm> FrozenLm::load(const std::filesystem::path& dir, const BpeVocab& vocab) {
  const auto info = read_checkpoint_info(dir);
  if (info.extra.value("kind", "") != "lm") throw CheckpointMismatch(dir.string() + " is not an LM checkpoint");
  if (info.extra.value("vocab_hash", "") != hex(vocab.hash())) {
    throw CheckpointMismatch("vocabulary does not match the one the LM was trained with");
  }
  LmConfig cfg;
  try {
    cfg = LmConfig::from_json(info.config);
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(e.what());
  }
  auto lm = std::make_unique<FrozenLm>(cfg, vocab, info.seed);
  load_checkpoint_params(dir, lm->params());
  lm->freeze();
  return lm;
}

Tensor lm_conditioned_nll(const FrozenLm& lm, const Tensor& conditioning, std::span<const std::int64_t> ids,
                          const ForwardCtx& ctx) {
  const Tensor logits = lm.logits(ids, conditioning, ctx);
  std::vector<std::int64_t> targets(ids.begin(), ids.end());
  targets.push_back(kEosId);
  targets.resize(static_cast<std::size_t>(logits.rows()));
  return seq2seq_nll(logits, targets);
}

std::vector<std::int64_t> lm_generate(const FrozenLm& lm, const Tensor& conditioning, const DecodeMode& mode,
                                      std::int64_t max_len) {
  if (conditioning.defined() && conditioning.rows() > 0 && conditioning.cols() != lm.width()) {
    throw ShapeMismatch("conditioning width " + std::to_string(conditioning.cols()) + " vs LM width " +
                        std::to_string(lm.width()));
  }
  return decode_tokens(lm.decoder(), conditioning.defined() ? conditioning : empty_memory(lm.width()), mode, max_len);
}

LmPretrainResult lm_pretrain(const std::vector<std::string>& corpus, const BpeVocab& vocab, const LmConfig& cfg,
                             std::uint64_t seed) {
  std::vector<std::vector<std::int64_t>> data;
  for (const auto& s : corpus) {
    auto ids = vocab.encode(s);
    if (!ids.empty()) data.push_back(std::move(ids));
  }
  if (data.empty()) throw EmptyCorpus("LM pretraining corpus is empty");

  LmPretrainResult out;
  out.lm = std::make_unique<FrozenLm>(cfg, vocab, seed);
  FrozenLm& lm = *out.lm;
  AdamW opt(lm.params().trainable(), AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = Rng(seed).fork("lm-pretrain");
  Rng drop_rng = rng.fork("dropout");
  ForwardCtx ctx{true, cfg.dropout, &drop_rng};
  const Tensor table = lm.decoder().tokens.table;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng ep = rng.fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[ep.uniform_int(i)]);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      Tensor loss;
      for (std::size_t k = b; k < end; ++k) {
        const auto& ids = data[order[k]];
        Tensor cond = empty_memory(cfg.d_model);
        if (cfg.conditioning == "denoise" && ep.uniform() < 0.5) {
          std::vector<std::int64_t> kept;
          for (auto id : ids)
            if (ep.uniform() >= cfg.denoise_drop) kept.push_back(id);
          for (std::size_t i = kept.size(); i > 1; --i) std::swap(kept[i - 1], kept[ep.uniform_int(i)]);
          if (!kept.empty()) cond = gather_rows(table, kept);
        }
        const Tensor l = lm_conditioned_nll(lm, cond, ids, ctx);
        loss = loss.defined() ? add(loss, l) : l;
      }
      total += loss.item();
      loss = scale(loss, 1.0 / static_cast<double>(end - b));
      opt.zero_grad();
      backward(loss);
      opt.step();
    }
    out.epoch_losses.push_back(total / static_cast<double>(data.size()));
  }
  lm.freeze();
  return out;
}

}  // namespace belt2
