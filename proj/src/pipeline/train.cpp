#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "belt2/error.hpp"
#include "belt2/numcore/optim.hpp"
#include "belt2/pipeline/pipeline.hpp"

namespace belt2 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void start_run(const RunConfig& cfg, const BpeVocab& vocab, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  write_text(out / "config.json", cfg.to_json().dump(2) + "\n");
  vocab.save(out / "vocab.json");
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

double scheduled_lr(const TrainConfig& t, int epoch) {
  if (t.lr_schedule == "cosine") return t.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / t.epochs));
  return t.lr;
}

struct SampleTargets {
  std::vector<std::int64_t> text;
  std::vector<std::int64_t> summary;
  std::optional<int> sentiment;
};

/// Stage-1 losses of one packed batch.
class Stage1Batch {
 public:
  Stage1Batch(const QConformer& model, const RunConfig& cfg, const std::map<std::string, std::vector<std::int64_t>>& pieces)
      : model_(model), cfg_(cfg), pieces_(pieces) {}

  struct Out {
    Stage1Components c;
    VqLoss vq;
    std::vector<std::int64_t> counts;
  };

  Out run(const std::vector<const EegSample*>& batch, const std::vector<const SampleTargets*>& targets,
          const std::string& task, const ForwardCtx& ctx, Rng& rng) const {
    Out o;
    const auto packed = pack_samples(batch, cfg_.model.input_dim);
    const Tensor h = model_.encode_continuous(packed, ctx);
    const auto q = model_.quantize(h);
    o.counts = q.counts;
    const Tensor e_hat = model_.reconstruct(q.z_q, packed.segments, ctx);
    o.vq = vq_loss(h, q.codes, q.usage, packed.e, e_hat, cfg_.loss.vq_terms);
    o.c.vq = o.vq.total;

    std::vector<std::string> words;
    for (const auto* s : batch)
      for (const auto& w : s->words) words.push_back(w.word);
    const Tensor qspace = model_.to_query_space(q.z_q);
    o.c.bpe = bpe_term(qspace, words, rng);
    o.c.neg = neg_term(qspace, words, rng);

    Tensor task_loss;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto [start, len] = packed.segments[i];
      const Tensor mlc = model_.mlc(task, slice_rows(q.z_q, start, len), ctx);
      Tensor l;
      if (task == "sentiment") {
        if (!targets[i]->sentiment) continue;
        l = sentiment_loss(model_.sentiment_probs(mlc), *targets[i]->sentiment);
      } else {
        auto ids = task == "summary" ? targets[i]->summary : targets[i]->text;
        ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(cfg_.model.max_positions - 1)));
        std::vector<std::int64_t> tgt = ids;
        tgt.push_back(kEosId);
        const Tensor logits = model_.text_logits(mlc, ids, ctx);
        tgt.resize(static_cast<std::size_t>(logits.rows()));
        l = seq2seq_nll(logits, tgt);
      }
      task_loss = task_loss.defined() ? add(task_loss, l) : l;
      ++n_task_;
    }
    if (task_loss.defined()) o.c.elm = scale(task_loss, 1.0 / static_cast<double>(n_task_));
    n_task_ = 0;
    return o;
  }

 private:
  Tensor bpe_term(const Tensor& qspace, const std::vector<std::string>& words, Rng& rng) const {
    const std::set<std::string> uniq(words.begin(), words.end());
    std::vector<std::int64_t> rows, pos, neg;
    for (std::size_t r = 0; r < words.size(); ++r) {
      const auto& own = pieces_.at(words[r]);
      std::set<std::int64_t> pool;
      for (const auto& u : uniq) {
        if (u == words[r]) continue;
        for (auto id : pieces_.at(u))
          if (std::find(own.begin(), own.end(), id) == own.end()) pool.insert(id);
      }
      if (pool.empty() || own.empty()) continue;
      const std::vector<std::int64_t> pv(pool.begin(), pool.end());
      rows.push_back(static_cast<std::int64_t>(r));
      pos.push_back(own[rng.uniform_int(own.size())]);
      for (int k = 0; k < cfg_.loss.n_neg; ++k) neg.push_back(pv[rng.uniform_int(pv.size())]);
    }
    if (rows.empty()) return {};
    return bpe_cl_loss(gather_rows(qspace, rows), model_.subword_embeddings(pos), model_.subword_embeddings(neg),
                       cfg_.loss.n_neg, cfg_.loss.normalize);
  }

  Tensor neg_term(const Tensor& qspace, const std::vector<std::string>& words, Rng& rng) const {
    std::vector<std::int64_t> rows, neg;
    for (std::size_t r = 0; r < words.size(); ++r) {
      std::vector<std::int64_t> others;
      for (std::size_t j = 0; j < words.size(); ++j)
        if (words[j] != words[r]) others.push_back(static_cast<std::int64_t>(j));
      if (others.empty()) continue;
      rows.push_back(static_cast<std::int64_t>(r));
      for (int k = 0; k < cfg_.loss.n_neg; ++k) neg.push_back(others[rng.uniform_int(others.size())]);
    }
    if (rows.empty()) return {};
    return ncl_loss(gather_rows(qspace, rows), gather_rows(qspace, neg), cfg_.loss.n_neg, cfg_.loss.normalize);
  }

  const QConformer& model_;
  const RunConfig& cfg_;
  const std::map<std::string, std::vector<std::int64_t>>& pieces_;
  mutable std::size_t n_task_ = 0;
};

const std::vector<std::string> kEncoderColumns = {
    "epoch",     "lr",        "loss_total",     "loss_vq",          "loss_codebook",   "loss_commit",
    "loss_entropy", "loss_recon", "loss_bpe",   "loss_elm",         "loss_neg",        "loss_translation",
    "loss_summary", "loss_sentiment", "loss_mt", "val_bleu1",       "codebook_entropy", "sentiment_acc",
    "train_recon"};

std::vector<std::string> encoder_row(const EpochLog& e) {
  auto task = [&](const char* t) {
    auto it = e.task_loss.find(t);
    return it == e.task_loss.end() ? std::string() : fmt(it->second);
  };
  return {std::to_string(e.epoch), fmt(e.lr),         fmt(e.loss_total), fmt(e.loss_vq),        fmt(e.loss_codebook),
          fmt(e.loss_commit),      fmt(e.loss_entropy), fmt(e.loss_recon), fmt(e.loss_bpe),     fmt(e.loss_elm),
          fmt(e.loss_neg),         task("translation"), task("summary"),  task("sentiment"),    fmt(e.loss_mt),
          fmt(e.val_bleu1),        fmt(e.codebook_entropy), fmt(e.sentiment_acc), fmt(e.train_recon)};
}

const std::vector<EegSample>& eval_subset(const PreparedData& d, const RunConfig& cfg) {
  const auto& s = d.subset(cfg.data.eval_split);
  return s.empty() ? d.splits.train : s;
}

double eval_recon(const QConformer& model, const std::vector<EegSample>& samples) {
  NoGradScope no_grad;
  std::vector<const EegSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto packed = pack_samples(ptrs, model.config().input_dim);
  const auto q = model.quantize(model.encode_continuous(packed, {}));
  return mse(packed.e, model.reconstruct(q.z_q, packed.segments, {})).item();
}

std::string snapshot_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d", epoch);
  return buf;
}

}  // namespace

EncoderRun train_encoder(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  const auto& train = data.splits.train;
  const auto& tasks = cfg.train.tasks;
  const bool has_sentiment = std::find(tasks.begin(), tasks.end(), "sentiment") != tasks.end();
  if (has_sentiment && std::none_of(train.begin(), train.end(), [](const EegSample& s) { return s.sentiment.has_value(); })) {
    throw DataError("sentiment task requested but the training split has no labels");
  }

  std::unique_ptr<QConformer> model;
  if (!cfg.train.init.empty()) {
    model = QConformer::load(cfg.train.init, data.vocab);
    if (model->config().to_json() != cfg.model.to_json()) {
      throw CheckpointMismatch("init checkpoint " + cfg.train.init + " has a different model config");
    }
  } else {
    model = std::make_unique<QConformer>(cfg.model, data.vocab, cfg.train.seed);
  }
  for (const auto& t : tasks)
    if (!model->has_task(t)) model->register_task(t);

  start_run(cfg, data.vocab, out);
  CsvLog csv(out / "metrics.csv", kEncoderColumns);

  std::vector<SampleTargets> targets;
  std::map<std::string, std::vector<std::int64_t>> pieces;
  for (const auto& s : train) {
    targets.push_back({data.vocab.encode(s.text), data.vocab.encode(*s.summary), s.sentiment});
    for (const auto& w : s.words) {
      if (pieces.contains(w.word)) continue;
      std::vector<std::int64_t> ids;
      for (const auto& p : data.vocab.encode_word(w.word)) ids.push_back(p.id);
      pieces[w.word] = std::move(ids);
    }
  }

  const Rng root(cfg.train.seed);
  Rng drop_rng = root.fork("dropout");
  Rng cl_rng = root.fork("contrastive");
  Rng order_rng = root.fork("shuffle");
  TaskSampler sampler(tasks, cfg.train.seed);
  const auto params = model->params().trainable();
  AdamW opt(params, AdamWConfig{cfg.train.lr, 0.9, 0.999, 1e-8, cfg.train.weight_decay});
  const LossWeights weights = cfg.weights();
  const Stage1Batch step(*model, cfg, pieces);
  const ForwardCtx train_ctx{true, cfg.model.dropout, &drop_rng};
  const DecodeMode mode = DecodeMode::parse(cfg.train.decoding);
  const auto& eval_set = eval_subset(data, cfg);

  EncoderRun run;
  double best_bleu = -1.0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = scheduled_lr(cfg.train, epoch - 1);
    opt.set_lr(log.lr);
    shuffle(order, order_rng);

    std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.model.codebook_size), 0);
    std::map<std::string, std::pair<double, int>> task_acc;
    int n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.train.batch_size));
      std::vector<const EegSample*> batch;
      std::vector<const SampleTargets*> tb;
      for (std::size_t k = b; k < end; ++k) {
        batch.push_back(&train[order[k]]);
        tb.push_back(&targets[order[k]]);
      }
      const std::string& task = sampler.next();
      const auto o = step.run(batch, tb, task, train_ctx, cl_rng);

      opt.zero_grad();
      const double total = stage1_total(o.c, weights).item();
      stage1_backward(o.c, weights, params);
      opt.step();

      for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
      log.loss_total += total;
      log.loss_vq += o.vq.total.item();
      log.loss_codebook += o.vq.codebook.item();
      log.loss_commit += o.vq.commitment.item();
      log.loss_entropy += o.vq.entropy.item();
      log.loss_recon += o.vq.recon.item();
      if (o.c.bpe.defined()) log.loss_bpe += o.c.bpe.item();
      if (o.c.neg.defined()) log.loss_neg += o.c.neg.item();
      if (o.c.elm.defined()) {
        log.loss_elm += o.c.elm.item();
        task_acc[task].first += o.c.elm.item();
        task_acc[task].second += 1;
      }
      ++n_batches;
    }
    const double nb = n_batches;
    for (double* v : {&log.loss_total, &log.loss_vq, &log.loss_codebook, &log.loss_commit, &log.loss_entropy,
                      &log.loss_recon, &log.loss_bpe, &log.loss_elm, &log.loss_neg})
      *v /= nb;
    for (const auto& [t, acc] : task_acc) {
      log.task_loss[t] = acc.first / acc.second;
      log.loss_mt += log.task_loss[t];
    }
    log.codebook_entropy = usage_entropy(counts);
    log.train_recon = eval_recon(*model, train);

    if (epoch % cfg.train.eval_every == 0 || epoch == cfg.train.epochs) {
      if (model->has_task("translation")) {
        const auto hyps = decode_samples(*model, eval_set, "translation", mode, cfg.train.decode_max_len);
        log.val_bleu1 = bleu_n(hyps, references(eval_set, "translation"), 1);
      }
      if (model->has_task("sentiment") &&
          std::any_of(eval_set.begin(), eval_set.end(), [](const EegSample& s) { return s.sentiment.has_value(); })) {
        log.sentiment_acc = evaluate_encoder(*model, eval_set, "sentiment", mode, cfg.train.decode_max_len).cls->accuracy;
      }
    }

    CheckpointInfo info;
    info.epoch = epoch;
    info.metric = log.val_bleu1.value_or(0.0);
    if (epoch % cfg.train.snapshot_every == 0) model->save(out / "snapshots" / snapshot_name(epoch), info);
    const double score = log.val_bleu1 ? *log.val_bleu1 : log.sentiment_acc.value_or(-1.0);
    if ((log.val_bleu1 || log.sentiment_acc) && score >= best_bleu) {
      best_bleu = score;
      run.best_epoch = epoch;
      model->save(out / "best", info);
    }
    csv.row(encoder_row(log));
    run.epochs.push_back(std::move(log));
  }
  CheckpointInfo info;
  info.epoch = cfg.train.epochs;
  info.metric = run.epochs.back().val_bleu1.value_or(0.0);
  model->save(out / "last", info);
  return run;
}

std::vector<double> train_lm(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  std::vector<std::string> corpus;
  for (const auto& s : data.splits.train) corpus.push_back(s.text);
  auto result = lm_pretrain(corpus, data.vocab, cfg.lm, cfg.train.seed);
  start_run(cfg, data.vocab, out);
  CsvLog csv(out / "metrics.csv", {"epoch", "loss_lm"});
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) csv.row({std::to_string(e + 1), fmt(result.epoch_losses[e])});
  CheckpointInfo info;
  info.epoch = cfg.lm.epochs;
  info.metric = result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back();
  result.lm->save(out / "model", info);
  return result.epoch_losses;
}

BridgeRun train_bridge(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  if (cfg.bridge.encoder_dir.empty() || cfg.bridge.lm_dir.empty()) {
    throw ConfigError("bridge.encoder_dir and bridge.lm_dir must be set");
  }
  const fs::path enc_dir = cfg.bridge.encoder_dir;
  if (!fs::exists(enc_dir / "best" / "manifest.json")) {
    throw CheckpointMismatch("no stage-1 best checkpoint in " + enc_dir.string());
  }
  LoadedEncoder enc = load_encoder(enc_dir, "best");
  if (!enc.model->has_task("translation")) throw CheckpointMismatch("the encoder was not trained on translation");
  const BpeVocab lm_vocab = BpeVocab::load(fs::path(cfg.bridge.lm_dir) / "vocab.json");
  if (lm_vocab.hash() != enc.vocab.hash()) throw CheckpointMismatch("encoder and LM vocabularies differ");
  auto lm = FrozenLm::load(fs::path(cfg.bridge.lm_dir) / "model", enc.vocab);

  const PreparedData data = prepare_data(cfg, enc.vocab);
  const auto& train = data.splits.train;

  const int best_epoch = read_checkpoint_info(enc_dir / "best").epoch;
  std::vector<fs::path> candidates;
  for (const auto& p : list_snapshots(enc_dir))
    if (read_checkpoint_info(p).epoch != best_epoch) candidates.push_back(p);
  if (static_cast<int>(candidates.size()) < cfg.bridge.n_ckpt) {
    throw ConfigError("bridge.n_ckpt=" + std::to_string(cfg.bridge.n_ckpt) + " but only " +
                      std::to_string(candidates.size()) + " suboptimal snapshots exist");
  }
  const Rng root(cfg.train.seed);
  Rng pick_rng = root.fork("bridge-checkpoints");
  std::vector<std::size_t> idx(candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle(idx, pick_rng);
  idx.resize(static_cast<std::size_t>(cfg.bridge.n_ckpt));
  std::sort(idx.begin(), idx.end());

  std::vector<CheckpointRef> refs{{"best", enc_dir / "best"}};
  for (auto i : idx) refs.push_back({candidates[i].filename().string(), candidates[i]});

  BridgeRun run;
  run.encoder_hash_before = enc.model->params().hash();
  run.lm_hash_before = lm->params().hash();

  start_run(cfg, enc.vocab, out);
  const MlcCache cache = cache_mlc(refs, "best", train, "translation", enc.vocab);
  cache.save(out / "mlc_cache");
  run.cache_entries = cache.size();
  run.cache_unique = cache.unique_values();

  VirtualPrefix prefix =
      VirtualPrefix::create(cfg.bridge.prefix_len, enc.model->config().d_q, lm->width(), cfg.bridge.adapter, cfg.train.seed);
  AdamW opt(prefix.ps.trainable(), AdamWConfig{cfg.bridge.lr, 0.9, 0.999, 1e-8, 0.0});
  const double ratio = cfg.bridge.n_ckpt == 0 ? 0.0 : cfg.bridge.ratio;
  Rng spec_rng = root.fork("speculative");
  Rng order_rng = root.fork("bridge-shuffle");
  const DecodeMode mode = DecodeMode::parse(cfg.train.decoding);
  const auto& eval_set = eval_subset(data, cfg);

  std::vector<std::vector<std::int64_t>> targets;
  for (const auto& s : train) targets.push_back(enc.vocab.encode(s.text));

  CsvLog csv(out / "metrics.csv", {"epoch", "loss_bridge", "val_bleu1"});
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 1; epoch <= cfg.bridge.epochs; ++epoch) {
    shuffle(order, order_rng);
    double total = 0.0;
    int n = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.bridge.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.bridge.batch_size));
      std::vector<Tensor> mlcs;
      std::vector<std::vector<std::int64_t>> tgt;
      for (std::size_t k = b; k < end; ++k) {
        mlcs.push_back(speculative_sample(cache, train[order[k]].id, ratio, spec_rng));
        tgt.push_back(targets[order[k]]);
      }
      total += prefix_tune_step(prefix, opt, *lm, mlcs, tgt);
      ++n;
    }
    run.epoch_losses.push_back(total / n);
    std::optional<double> bleu;
    if (epoch % cfg.train.eval_every == 0 || epoch == cfg.bridge.epochs) {
      std::vector<std::string> hyps(eval_set.size());
      parallel_for(eval_set.size(), [&](std::size_t i) {
        hyps[i] = bridged_generate(prefix, *lm, *enc.model, eval_set[i], mode, cfg.train.decode_max_len);
      });
      bleu = bleu_n(hyps, references(eval_set, "translation"), 1);
    }
    run.bleu1.push_back(bleu);
    csv.row({std::to_string(epoch), fmt(run.epoch_losses.back()), fmt(bleu)});
  }

  run.encoder_hash_after = enc.model->params().hash();
  run.lm_hash_after = lm->params().hash();
  if (run.encoder_hash_after != run.encoder_hash_before || run.lm_hash_after != run.lm_hash_before) {
    throw FrozenViolation("encoder or LM parameters changed during bridging");
  }

  CheckpointInfo info;
  info.config = {{"prefix_len", cfg.bridge.prefix_len}, {"adapter", cfg.bridge.adapter},
                 {"d_q", enc.model->config().d_q}, {"d_lm", lm->width()}};
  info.seed = cfg.train.seed;
  info.epoch = cfg.bridge.epochs;
  info.metric = run.bleu1.back().value_or(0.0);
  info.extra = {{"kind", "prefix"}};
  save_checkpoint(out / "prefix", prefix.ps, info);

  const json stats = {{"checkpoints", refs.size()},
                      {"samples", cache.samples().size()},
                      {"cache_entries", run.cache_entries},
                      {"unique_values", run.cache_unique},
                      {"encoder_hash", std::to_string(run.encoder_hash_after)},
                      {"lm_hash", std::to_string(run.lm_hash_after)}};
  write_text(out / "bridge_stats.json", stats.dump(2) + "\n");
  return run;
}

}  // namespace belt2
