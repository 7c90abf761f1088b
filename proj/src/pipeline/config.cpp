#include "belt2/pipeline/config.hpp"

#include <fstream>

#include "belt2/error.hpp"

namespace belt2 {

using nlohmann::json;

namespace {

void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where.empty() ? "config must be a JSON object" : where + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) merge_strict(slot, it.value(), key);
    else slot = it.value();
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

LossWeights RunConfig::weights() const {
  return LossWeights{loss.lambda[0], loss.lambda[1], loss.lambda[2], loss.lambda[3], train.grad_norm};
}

SplitSpec RunConfig::split_spec() const {
  SplitSpec s;
  s.mode = parse_split_mode(data.split);
  s.ratios = data.ratios;
  if (!data.held_out_subject.empty()) s.held_out_subject = data.held_out_subject;
  s.seed = train.seed;
  return s;
}

void RunConfig::validate() const {
  model.validate();
  lm.validate();
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(train.lr > 0 && train.epochs >= 1 && train.batch_size >= 1, "train.lr, train.epochs, train.batch_size must be positive");
  need(!train.tasks.empty(), "train.tasks must not be empty");
  for (const auto& t : train.tasks) {
    need(std::find(kTaskNames.begin(), kTaskNames.end(), t) != kTaskNames.end(), "unknown task '" + t + "'");
  }
  need(train.lr_schedule == "constant" || train.lr_schedule == "cosine", "train.lr_schedule must be constant or cosine");
  need(train.eval_every >= 1 && train.snapshot_every >= 1, "train.eval_every and train.snapshot_every must be >= 1");
  need(train.decode_max_len >= 1, "train.decode_max_len must be >= 1");
  DecodeMode::parse(train.decoding);
  for (double l : loss.lambda) need(l >= 0, "loss.lambda entries must be non-negative");
  for (double l : loss.vq_terms) need(l >= 0, "loss.vq_terms entries must be non-negative");
  need(loss.n_neg >= 1, "loss.n_neg must be >= 1");
  need(bridge.prefix_len >= 0 && bridge.n_ckpt >= 0, "bridge.prefix_len and bridge.n_ckpt must be >= 0");
  need(bridge.ratio >= 0 && bridge.ratio <= 1, "bridge.ratio must lie in [0, 1]");
  need(bridge.lr > 0 && bridge.epochs >= 1 && bridge.batch_size >= 1, "bridge.lr, bridge.epochs, bridge.batch_size must be positive");
  need(bridge.adapter == "auto" || bridge.adapter == "identity" || bridge.adapter == "linear",
       "bridge.adapter must be auto, identity or linear");
  need(data.D >= 1 && data.bpe_merges >= 0, "data.D must be positive and data.bpe_merges non-negative");
  need(data.eval_split == "train" || data.eval_split == "val" || data.eval_split == "test",
       "data.eval_split must be train, val or test");
  parse_split_mode(data.split);
}

json RunConfig::to_json() const {
  json m = model.to_json();
  m.erase("input_dim");
  return {
      {"model", m},
      {"train",
       {{"lr", train.lr},
        {"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"seed", train.seed},
        {"grad_norm", train.grad_norm},
        {"tasks", train.tasks},
        {"lr_schedule", train.lr_schedule},
        {"weight_decay", train.weight_decay},
        {"eval_every", train.eval_every},
        {"snapshot_every", train.snapshot_every},
        {"decode_max_len", train.decode_max_len},
        {"decoding", train.decoding},
        {"init", train.init}}},
      {"loss", {{"lambda", loss.lambda}, {"vq_terms", loss.vq_terms}, {"n_neg", loss.n_neg}, {"normalize", loss.normalize}}},
      {"bridge",
       {{"prefix_len", bridge.prefix_len},
        {"n_ckpt", bridge.n_ckpt},
        {"ratio", bridge.ratio},
        {"lr", bridge.lr},
        {"epochs", bridge.epochs},
        {"batch_size", bridge.batch_size},
        {"adapter", bridge.adapter},
        {"encoder_dir", bridge.encoder_dir},
        {"lm_dir", bridge.lm_dir}}},
      {"lm", lm.to_json()},
      {"data",
       {{"path", data.path},
        {"split", data.split},
        {"ratios", data.ratios},
        {"held_out_subject", data.held_out_subject},
        {"D", data.D},
        {"bpe_merges", data.bpe_merges},
        {"eval_split", data.eval_split}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  json doc = RunConfig{}.to_json();
  merge_strict(doc, j, "");

  RunConfig c;
  c.model = QConformerConfig::from_json(doc["model"]);
  c.lm = LmConfig::from_json(doc["lm"]);

  const json& t = doc["train"];
  c.train.lr = get<double>(t, "train", "lr");
  c.train.epochs = get<int>(t, "train", "epochs");
  c.train.batch_size = get<int>(t, "train", "batch_size");
  c.train.seed = get<std::uint64_t>(t, "train", "seed");
  c.train.grad_norm = get<bool>(t, "train", "grad_norm");
  c.train.tasks = get<std::vector<std::string>>(t, "train", "tasks");
  c.train.lr_schedule = get<std::string>(t, "train", "lr_schedule");
  c.train.weight_decay = get<double>(t, "train", "weight_decay");
  c.train.eval_every = get<int>(t, "train", "eval_every");
  c.train.snapshot_every = get<int>(t, "train", "snapshot_every");
  c.train.decode_max_len = get<std::int64_t>(t, "train", "decode_max_len");
  c.train.decoding = get<std::string>(t, "train", "decoding");
  c.train.init = get<std::string>(t, "train", "init");

  const json& l = doc["loss"];
  c.loss.lambda = get<std::array<double, 4>>(l, "loss", "lambda");
  c.loss.vq_terms = get<std::array<double, 4>>(l, "loss", "vq_terms");
  c.loss.n_neg = get<int>(l, "loss", "n_neg");
  c.loss.normalize = get<bool>(l, "loss", "normalize");

  const json& b = doc["bridge"];
  c.bridge.prefix_len = get<int>(b, "bridge", "prefix_len");
  c.bridge.n_ckpt = get<int>(b, "bridge", "n_ckpt");
  c.bridge.ratio = get<double>(b, "bridge", "ratio");
  c.bridge.lr = get<double>(b, "bridge", "lr");
  c.bridge.epochs = get<int>(b, "bridge", "epochs");
  c.bridge.batch_size = get<int>(b, "bridge", "batch_size");
  c.bridge.adapter = get<std::string>(b, "bridge", "adapter");
  c.bridge.encoder_dir = get<std::string>(b, "bridge", "encoder_dir");
  c.bridge.lm_dir = get<std::string>(b, "bridge", "lm_dir");

  const json& d = doc["data"];
  c.data.path = get<std::string>(d, "data", "path");
  c.data.split = get<std::string>(d, "data", "split");
  c.data.ratios = get<std::array<double, 3>>(d, "data", "ratios");
  c.data.held_out_subject = get<std::string>(d, "data", "held_out_subject");
  c.data.D = get<std::int64_t>(d, "data", "D");
  c.data.bpe_merges = get<int>(d, "data", "bpe_merges");
  c.data.eval_split = get<std::string>(d, "data", "eval_split");

  c.model.input_dim = c.data.D;
  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  const json defaults = RunConfig{}.to_json();
  const json* ref = &defaults;
  json* slot = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!ref->is_object() || !ref->contains(key)) throw ConfigError("unknown config key '" + path + "'");
    ref = &(*ref)[key];
    if (!slot->is_object()) *slot = json::object();
    slot = &(*slot)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *slot = std::move(value);
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

}  // namespace belt2
