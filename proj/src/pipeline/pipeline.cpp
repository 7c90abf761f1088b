#include "belt2/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "belt2/data/summary.hpp"
#include "belt2/error.hpp"

namespace belt2 {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<EegSample>& PreparedData::subset(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw ConfigError("unknown split '" + name + "'");
}

namespace {

DataSplits load_splits(const RunConfig& cfg) {
  if (cfg.data.path.empty()) throw ConfigError("data.path is not set");
  auto samples = load_jsonl(cfg.data.path);
  if (samples.empty()) throw DataError(cfg.data.path + " holds no samples");
  if (samples.front().dim() != cfg.data.D) {
    throw DataError("data has D=" + std::to_string(samples.front().dim()) + ", config expects " +
                    std::to_string(cfg.data.D));
  }
  for (auto& s : samples)
    if (!s.summary) s.summary = summarize(s.text);
  try {
    return split(samples, cfg.split_spec());
  } catch (const EmptySplit& e) {
    throw DataError(e.what());
  }
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData d;
  d.splits = load_splits(cfg);
  std::vector<std::string> corpus;
  for (const auto& s : d.splits.train) corpus.push_back(s.text);
  if (corpus.empty()) throw DataError("training split is empty");
  d.vocab = train_bpe(corpus, static_cast<std::size_t>(cfg.data.bpe_merges), kVerbalizers);
  return d;
}

PreparedData prepare_data(const RunConfig& cfg, const BpeVocab& vocab) {
  PreparedData d;
  d.splits = load_splits(cfg);
  d.vocab = vocab;
  return d;
}

std::vector<fs::path> list_snapshots(const fs::path& run_dir) {
  std::vector<fs::path> out;
  const fs::path dir = run_dir / "snapshots";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

RunConfig read_run_config(const fs::path& run_dir) {
  std::ifstream in(run_dir / "config.json");
  if (!in) throw CheckpointMismatch("no config.json in " + run_dir.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw CheckpointMismatch("malformed config.json in " + run_dir.string());
  try {
    return RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(std::string("run config: ") + e.what());
  }
}

BpeVocab read_vocab(const fs::path& run_dir, const fs::path& vocab_path) {
  const fs::path p = vocab_path.empty() ? run_dir / "vocab.json" : vocab_path;
  if (!fs::exists(p)) throw CheckpointMismatch("no vocabulary at " + p.string());
  return BpeVocab::load(p);
}

}  // namespace

LoadedEncoder load_encoder(const fs::path& run_dir, const std::string& which, const fs::path& vocab_path) {
  LoadedEncoder e;
  e.cfg = read_run_config(run_dir);
  e.vocab = read_vocab(run_dir, vocab_path);
  const fs::path dir = run_dir / which;
  if (!fs::exists(dir / "manifest.json")) throw CheckpointMismatch("no checkpoint at " + dir.string());
  e.model = QConformer::load(dir, e.vocab);
  return e;
}

LoadedBridge load_bridge(const fs::path& run_dir, const fs::path& vocab_path) {
  LoadedBridge b;
  b.cfg = read_run_config(run_dir);
  b.encoder = load_encoder(b.cfg.bridge.encoder_dir, "best", vocab_path);
  b.lm = FrozenLm::load(fs::path(b.cfg.bridge.lm_dir) / "model", b.encoder.vocab);
  b.prefix = VirtualPrefix::create(b.cfg.bridge.prefix_len, b.encoder.model->config().d_q, b.lm->width(),
                                   b.cfg.bridge.adapter, b.cfg.train.seed);
  load_checkpoint_params(run_dir / "prefix", b.prefix.ps);
  return b;
}

int eval_threads() {
  const char* v = std::getenv("BELT2_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw ConfigError(std::string("BELT2_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(eval_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::string> decode_samples(const QConformer& model, const std::vector<EegSample>& samples,
                                        const std::string& task, const DecodeMode& mode, std::int64_t max_len) {
  std::vector<std::string> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const Tensor mlc = encode_mlc(model, samples[i], task);
    out[i] = model.vocab().decode(model.decode_text(mlc, mode, max_len));
  });
  return out;
}

std::vector<std::string> decode_samples(const LoadedBridge& b, const std::vector<EegSample>& samples,
                                        const DecodeMode& mode, std::int64_t max_len) {
  std::vector<std::string> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    out[i] = bridged_generate(b.prefix, *b.lm, *b.encoder.model, samples[i], mode, max_len);
  });
  return out;
}

std::vector<int> classify_samples(const QConformer& model, const std::vector<EegSample>& samples) {
  std::vector<int> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    out[i] = model.classify_sentiment(encode_mlc(model, samples[i], "sentiment")).label;
  });
  return out;
}

std::vector<std::string> references(const std::vector<EegSample>& samples, const std::string& task) {
  std::vector<std::string> out;
  for (const auto& s : samples) {
    if (task == "translation") out.push_back(s.text);
    else if (task == "summary") out.push_back(s.summary ? *s.summary : summarize(s.text));
    else throw UnknownTask("'" + task + "' has no text references");
  }
  return out;
}

EvalReport evaluate_encoder(const QConformer& model, const std::vector<EegSample>& samples, const std::string& task,
                            const DecodeMode& mode, std::int64_t max_len) {
  if (!model.has_task(task)) throw UnknownTask("the checkpoint was not trained on '" + task + "'");
  if (samples.empty()) throw DataError("evaluation split is empty");
  if (task != "sentiment") return text_report(decode_samples(model, samples, task, mode, max_len), references(samples, task));

  std::vector<EegSample> labeled;
  for (const auto& s : samples)
    if (s.sentiment) labeled.push_back(s);
  if (labeled.empty()) throw DataError("no sentiment labels in the evaluation split");
  std::vector<int> labels;
  for (const auto& s : labeled) labels.push_back(*s.sentiment);
  EvalReport r;
  r.cls = cls_metrics(classify_samples(model, labeled), labels, kNumSentimentClasses);
  r.n_samples = static_cast<std::int64_t>(labeled.size());
  return r;
}

EvalReport evaluate_bridge(const LoadedBridge& b, const std::vector<EegSample>& samples, const DecodeMode& mode,
                           std::int64_t max_len) {
  if (samples.empty()) throw DataError("evaluation split is empty");
  return text_report(decode_samples(b, samples, mode, max_len), references(samples, "translation"));
}

}  // namespace belt2
