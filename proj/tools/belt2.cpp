#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "belt2/data/summary.hpp"
#include "belt2/data/synth.hpp"
#include "belt2/error.hpp"
#include "belt2/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace belt2;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

int exit_code(const Error& e) {
  const auto& k = e.kind();
  if (k == "ConfigError" || k == "UnknownTask" || k == "DuplicateTask") return kExitConfig;
  if (k == "DataError" || k == "ParseError" || k == "SchemaError" || k == "DimMismatch" || k == "EmptySplit" ||
      k == "IoError" || k == "EmptyCorpus")
    return kExitData;
  if (k == "CheckpointMismatch") return kExitCheckpoint;
  return kExitOther;
}

struct GenArgs {
  std::size_t sentences = 64;
  std::int64_t dim = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int subjects = 1;
  std::string out;
};

struct TrainArgs {
  std::string stage;
  std::string config;
  std::string data;
  std::string out;
  std::string tasks;
  std::string init;
  std::vector<std::string> sets;
};

struct EvalArgs {
  std::string ckpt;
  std::string split = "test";
  std::string mode = "encoder";
  std::string task = "translation";
  std::string which = "best";
  std::string vocab;
  std::string data;
  std::string decoding = "greedy";
};

struct DecodeArgs {
  std::string ckpt;
  std::string input;
  std::string mode = "encoder";
  std::string task = "translation";
  std::string which = "best";
  std::string vocab;
  bool greedy = false;
  int beam = 0;
  std::int64_t max_len = 0;
};

void gen_data(const GenArgs& a) {
  const auto sentences = generate_sentences(a.sentences, a.seed);
  auto samples = build_summary_targets(synth_generate(sentences, a.dim, a.noise, a.seed, a.subjects));
  save_jsonl(a.out, samples);
  std::printf("wrote %zu samples to %s\n", samples.size(), a.out.c_str());
}

void train(const TrainArgs& a) {
  std::vector<std::string> sets = a.sets;
  if (!a.data.empty()) sets.push_back("data.path=\"" + a.data + "\"");
  if (!a.init.empty()) sets.push_back("train.init=\"" + a.init + "\"");
  if (!a.tasks.empty()) {
    nlohmann::json tasks = nlohmann::json::array();
    std::size_t pos = 0;
    while (pos <= a.tasks.size()) {
      const auto comma = a.tasks.find(',', pos);
      tasks.push_back(a.tasks.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    sets.push_back("train.tasks=" + tasks.dump());
  }
  const RunConfig cfg = RunConfig::load(a.config, sets);
  if (a.stage == "encoder") {
    const auto run = train_encoder(cfg, a.out);
    const auto& last = run.epochs.back();
    std::printf("encoder: %zu epochs, best epoch %d, last loss %.6g\n", run.epochs.size(), run.best_epoch,
                last.loss_total);
  } else if (a.stage == "lm") {
    const auto losses = train_lm(cfg, a.out);
    std::printf("lm: %zu epochs, last loss %.6g\n", losses.size(), losses.empty() ? 0.0 : losses.back());
  } else {
    const auto run = train_bridge(cfg, a.out);
    std::printf("bridge: %zu epochs, cache %zu entries (%zu unique), last loss %.6g\n", run.epoch_losses.size(),
                run.cache_entries, run.cache_unique, run.epoch_losses.back());
  }
}

std::vector<EegSample> eval_samples(const RunConfig& run_cfg, const BpeVocab& vocab, const std::string& data,
                                    const std::string& split) {
  RunConfig cfg = run_cfg;
  if (!data.empty()) cfg.data.path = data;
  const auto prepared = prepare_data(cfg, vocab);
  return prepared.subset(split);
}

void eval(const EvalArgs& a) {
  const DecodeMode mode = DecodeMode::parse(a.decoding);
  EvalReport report;
  if (a.mode == "encoder") {
    const auto enc = load_encoder(a.ckpt, a.which, a.vocab);
    const auto samples = eval_samples(enc.cfg, enc.vocab, a.data, a.split);
    report = evaluate_encoder(*enc.model, samples, a.task, mode, enc.cfg.train.decode_max_len);
  } else {
    const auto b = load_bridge(a.ckpt, a.vocab);
    const auto samples = eval_samples(b.cfg, b.encoder.vocab, a.data, a.split);
    report = evaluate_bridge(b, samples, mode, b.cfg.train.decode_max_len);
  }
  std::cout << report.to_json() << "\n";
}

void decode(const DecodeArgs& a) {
  const DecodeMode mode = a.greedy ? DecodeMode::greedy() : DecodeMode::beam_search(a.beam);
  const auto samples = load_jsonl(a.input);
  std::vector<std::string> out;
  if (a.mode == "encoder") {
    const auto enc = load_encoder(a.ckpt, a.which, a.vocab);
    const auto max_len = a.max_len > 0 ? a.max_len : enc.cfg.train.decode_max_len;
    if (a.task == "sentiment") {
      for (int label : classify_samples(*enc.model, samples)) out.push_back(std::to_string(label));
    } else {
      if (!enc.model->has_task(a.task)) throw UnknownTask("the checkpoint was not trained on '" + a.task + "'");
      out = decode_samples(*enc.model, samples, a.task, mode, max_len);
    }
  } else {
    const auto b = load_bridge(a.ckpt, a.vocab);
    out = decode_samples(b, samples, mode, a.max_len > 0 ? a.max_len : b.cfg.train.decode_max_len);
  }
  for (std::size_t i = 0; i < samples.size(); ++i) std::cout << samples[i].id << "\t" << out[i] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"belt2: EEG-to-text encoder, frozen-LM bridge and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic EEG-text corpus as JSONL");
  g->add_option("--sentences", gen.sentences, "Number of sentences")->capture_default_str();
  g->add_option("--dim", gen.dim, "EEG embedding width D")->capture_default_str();
  g->add_option("--noise", gen.noise, "Noise standard deviation")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--subjects", gen.subjects, "Readers per sentence")->capture_default_str();
  g->add_option("--out", gen.out, "Output JSONL path")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one stage");
  t->add_option("--stage", tr.stage, "lm, encoder or bridge")->required()->check(CLI::IsMember({"lm", "encoder", "bridge"}));
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--data", tr.data, "Dataset JSONL (overrides data.path)");
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--tasks", tr.tasks, "Comma-separated tasks (overrides train.tasks)");
  t->add_option("--init", tr.init, "Encoder checkpoint to start from");
  t->add_option("--set", tr.sets, "Config override key.path=value (repeatable)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a run and print an EvalReport as JSON");
  e->add_option("--ckpt", ev.ckpt, "Run directory")->required();
  e->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  e->add_option("--mode", ev.mode, "encoder or bridged")->check(CLI::IsMember({"encoder", "bridged"}))->capture_default_str();
  e->add_option("--task", ev.task, "translation, summary or sentiment")->capture_default_str();
  e->add_option("--which", ev.which, "Checkpoint inside the encoder run")->capture_default_str();
  e->add_option("--vocab", ev.vocab, "Vocabulary file (defaults to the run's)");
  e->add_option("--data", ev.data, "Dataset JSONL (defaults to the run's)");
  e->add_option("--decoding", ev.decoding, "greedy or beam:N")->capture_default_str();

  DecodeArgs de;
  auto* d = app.add_subcommand("decode", "Decode every sample of a JSONL file");
  d->add_option("--ckpt", de.ckpt, "Run directory")->required();
  d->add_option("--input", de.input, "Input JSONL")->required();
  d->add_option("--mode", de.mode, "encoder or bridged")->check(CLI::IsMember({"encoder", "bridged"}))->capture_default_str();
  d->add_option("--task", de.task, "translation, summary or sentiment")->capture_default_str();
  d->add_option("--which", de.which, "Checkpoint inside the encoder run")->capture_default_str();
  d->add_option("--vocab", de.vocab, "Vocabulary file (defaults to the run's)");
  d->add_flag("--greedy", de.greedy, "Greedy decoding");
  d->add_option("--beam", de.beam, "Beam width (0 for greedy)")->capture_default_str();
  d->add_option("--max-len", de.max_len, "Token limit (0 for the run's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kExitConfig;
  }

  try {
    eval_threads();
    if (*g) gen_data(gen);
    else if (*t) train(tr);
    else if (*e) eval(ev);
    else decode(de);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitOther;
  }
  return 0;
}
