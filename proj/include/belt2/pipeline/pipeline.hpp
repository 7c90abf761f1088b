#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "belt2/bpe/bpe.hpp"
#include "belt2/bridge/bridge.hpp"
#include "belt2/data/split.hpp"
#include "belt2/metrics/metrics.hpp"
#include "belt2/pipeline/config.hpp"

namespace belt2 {

/// Run directory layout:
///   config.json, vocab.json, metrics.csv
///   encoder: snapshots/epoch_NNNN/, best/, last/
///   lm:      model/
///   bridge:  prefix/, mlc_cache.{bin,json}, bridge_stats.json

struct PreparedData {
  DataSplits splits;
  BpeVocab vocab;
  const std::vector<EegSample>& subset(const std::string& name) const;
};

/// Loads cfg.data.path, checks D, splits, and trains the BPE vocabulary on
/// the training texts. Throws DataError, ConfigError and the loader errors.
PreparedData prepare_data(const RunConfig& cfg);

/// Same as prepare_data but with a fixed vocabulary.
PreparedData prepare_data(const RunConfig& cfg, const BpeVocab& vocab);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0, loss_vq = 0, loss_codebook = 0, loss_commit = 0, loss_entropy = 0, loss_recon = 0;
  double loss_bpe = 0, loss_elm = 0, loss_neg = 0;
  std::map<std::string, double> task_loss;  // tasks trained this epoch
  double loss_mt = 0;
  std::optional<double> val_bleu1;
  double codebook_entropy = 0;
  std::optional<double> sentiment_acc;
  double train_recon = 0;  // eval-mode reconstruction MSE over the training split
};

struct EncoderRun {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
};

/// Stage-1 or multi-task encoder training depending on cfg.train.tasks.
/// Writes the run directory and returns the per-epoch log.
EncoderRun train_encoder(const RunConfig& cfg, const std::filesystem::path& out);

/// Pretrains the decoder LM on the training texts, then freezes it.
std::vector<double> train_lm(const RunConfig& cfg, const std::filesystem::path& out);

struct BridgeRun {
  std::vector<double> epoch_losses;
  std::vector<std::optional<double>> bleu1;
  std::size_t cache_entries = 0;
  std::size_t cache_unique = 0;
  std::uint64_t encoder_hash_before = 0, encoder_hash_after = 0;
  std::uint64_t lm_hash_before = 0, lm_hash_after = 0;
};

/// Prefix-tunes the frozen LM on cached MLCs of the encoder run in
/// cfg.bridge.encoder_dir. Throws CheckpointMismatch without a best checkpoint
/// or when the vocabularies differ, ConfigError with too few snapshots.
BridgeRun train_bridge(const RunConfig& cfg, const std::filesystem::path& out);

std::vector<std::filesystem::path> list_snapshots(const std::filesystem::path& run_dir);

/// Everything needed to run one trained encoder.
struct LoadedEncoder {
  RunConfig cfg;
  BpeVocab vocab;
  std::unique_ptr<QConformer> model;
};

/// `which` names a checkpoint inside the run ("best", "last" or a snapshot
/// path relative to the run). A non-empty vocab_path replaces vocab.json.
LoadedEncoder load_encoder(const std::filesystem::path& run_dir, const std::string& which = "best",
                           const std::filesystem::path& vocab_path = {});

struct LoadedBridge {
  RunConfig cfg;
  LoadedEncoder encoder;
  std::unique_ptr<FrozenLm> lm;
  VirtualPrefix prefix;
};

LoadedBridge load_bridge(const std::filesystem::path& run_dir, const std::filesystem::path& vocab_path = {});

/// Decoded text of every sample for a text task.
std::vector<std::string> decode_samples(const QConformer& model, const std::vector<EegSample>& samples,
                                        const std::string& task, const DecodeMode& mode, std::int64_t max_len);
std::vector<std::string> decode_samples(const LoadedBridge& b, const std::vector<EegSample>& samples,
                                        const DecodeMode& mode, std::int64_t max_len);
std::vector<int> classify_samples(const QConformer& model, const std::vector<EegSample>& samples);

/// Reference strings of a text task ("translation" or "summary").
std::vector<std::string> references(const std::vector<EegSample>& samples, const std::string& task);

/// EvalReport for one task: text metrics for translation/summary,
/// classification metrics for sentiment.
EvalReport evaluate_encoder(const QConformer& model, const std::vector<EegSample>& samples, const std::string& task,
                            const DecodeMode& mode, std::int64_t max_len);
EvalReport evaluate_bridge(const LoadedBridge& b, const std::vector<EegSample>& samples, const DecodeMode& mode,
                           std::int64_t max_len);

/// Worker count for per-sample evaluation: BELT2_THREADS when set, else 1.
/// Throws ConfigError on a malformed value.
int eval_threads();

/// Runs fn(i) for i in [0, n) on up to eval_threads() workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace belt2
