#include "belt2/bridge/bridge.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "belt2/error.hpp"

namespace belt2 {

VirtualPrefix VirtualPrefix::create(std::int64_t prefix_len, std::int64_t d_q, std::int64_t d_lm,
                                    const std::string& adapter, std::uint64_t seed) {
  if (prefix_len < 0) throw ConfigError("prefix_len must be >= 0");
  bool linear = false;
  if (adapter == "linear") linear = true;
  else if (adapter == "auto") linear = d_q != d_lm;
  else if (adapter == "identity") {
    if (d_q != d_lm) throw ConfigError("identity adapter needs d_q == d_lm");
  } else {
    throw ConfigError("bridge.adapter must be identity, linear or auto");
  }
  VirtualPrefix p;
  Rng rng = Rng(seed).fork("prefix");
  p.theta = p.ps.add_normal("prefix.theta", {prefix_len, d_lm}, 0.02, rng);
  if (linear) p.adapter = Linear::create(p.ps, "prefix.adapter", d_q, d_lm, rng);
  return p;
}

Tensor VirtualPrefix::conditioning(const Tensor& mlc) const {
  const Tensor mapped = adapter ? (*adapter)(mlc) : mlc;
  if (theta.rows() == 0) return mapped;
  return concat_rows({theta, mapped});
}

std::size_t MlcCache::unique_values() const {
  std::set<std::vector<double>> seen;
  for (const auto& e : entries_) seen.insert(e.value.to_vector());
  return seen.size();
}

std::vector<std::string> MlcCache::checkpoints() const {
  std::set<std::string> ids;
  for (const auto& e : entries_) ids.insert(e.checkpoint);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> MlcCache::samples() const {
  std::vector<std::string> out;
  for (const auto& [s, n] : samples_) out.push_back(s);
  return out;
}

void MlcCache::insert(MlcEntry e) {
  const auto key = std::make_pair(e.checkpoint, e.sample);
  if (index_.contains(key)) throw ConfigError("duplicate MLC cache entry " + e.checkpoint + "/" + e.sample);
  index_[key] = entries_.size();
  ++samples_[e.sample];
  entries_.push_back(std::move(e));
}

const Tensor& MlcCache::get(const std::string& checkpoint, const std::string& sample) const {
  auto it = index_.find({checkpoint, sample});
  if (it == index_.end()) throw UnknownSample("no cached MLC for sample '" + sample + "' at checkpoint " + checkpoint);
  return entries_[it->second].value;
}

void MlcCache::set_roles(std::string best, std::vector<std::string> suboptimal) {
  best_ = std::move(best);
  suboptimal_ = std::move(suboptimal);
}

void MlcCache::save(const std::filesystem::path& stem) const {
  nlohmann::json idx;
  idx["best"] = best_;
  idx["suboptimal"] = suboptimal_;
  idx["task"] = task_;
  idx["entries"] = nlohmann::json::array();
  std::vector<float> blob;
  for (const auto& e : entries_) {
    idx["entries"].push_back({{"ckpt", e.checkpoint},
                              {"sample", e.sample},
                              {"task", e.task},
                              {"offset", blob.size()},
                              {"rows", e.value.rows()},
                              {"cols", e.value.cols()}});
    for (double v : e.value.data()) blob.push_back(static_cast<float>(v));
  }
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << idx.dump(2) << '\n';
}

MlcCache MlcCache::load(const std::filesystem::path& stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw IoError("cannot read " + json_path.string());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot read " + bin_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::vector<float> blob(bytes.size() / sizeof(float));
  std::memcpy(blob.data(), bytes.data(), blob.size() * sizeof(float));
  MlcCache c;
  try {
    const auto idx = nlohmann::json::parse(js);
    c.set_roles(idx.at("best").get<std::string>(), idx.at("suboptimal").get<std::vector<std::string>>());
    c.set_task(idx.at("task").get<std::string>());
    for (const auto& e : idx.at("entries")) {
      const auto off = e.at("offset").get<std::size_t>();
      const auto rows = e.at("rows").get<std::int64_t>();
      const auto cols = e.at("cols").get<std::int64_t>();
      const auto n = static_cast<std::size_t>(rows * cols);
      if (off + n > blob.size()) throw IoError("MLC cache index points past the end of " + bin_path.string());
      c.insert({e.at("ckpt").get<std::string>(), e.at("sample").get<std::string>(), e.at("task").get<std::string>(),
                Tensor::from({rows, cols}, std::vector<double>(blob.begin() + off, blob.begin() + off + n))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("MLC cache index: ") + e.what());
  }
  return c;
}

Tensor encode_mlc(const QConformer& model, const EegSample& sample, const std::string& task) {
  NoGradScope no_grad;
  const auto batch = pack_samples({&sample}, model.config().input_dim);
  const auto q = model.quantize(model.encode_continuous(batch, {}));
  return model.mlc(task, q.z_q, {});
}

MlcCache cache_mlc(const std::vector<std::pair<std::string, const QConformer*>>& models, const std::string& best,
                   const std::vector<EegSample>& samples, const std::string& task) {
  std::vector<std::string> sub;
  bool has_best = false;
  std::set<std::string> ids;
  for (const auto& [id, m] : models) {
    if (!ids.insert(id).second) throw ConfigError("duplicate checkpoint id " + id);
    if (id == best) has_best = true;
    else sub.push_back(id);
  }
  if (!has_best) throw MissingBest("best checkpoint '" + best + "' is not among the cached checkpoints");
  MlcCache cache;
  cache.set_roles(best, sub);
  cache.set_task(task);
  for (const auto& [id, m] : models)
    for (const auto& s : samples) cache.insert({id, s.id, task, encode_mlc(*m, s, task)});
  return cache;
}

MlcCache cache_mlc(const std::vector<CheckpointRef>& checkpoints, const std::string& best,
                   const std::vector<EegSample>& samples, const std::string& task, const BpeVocab& vocab) {
  if (std::none_of(checkpoints.begin(), checkpoints.end(), [&](const CheckpointRef& c) { return c.id == best; })) {
    throw MissingBest("best checkpoint '" + best + "' is not among the cached checkpoints");
  }
  std::vector<std::unique_ptr<QConformer>> owned;
  std::vector<std::pair<std::string, const QConformer*>> models;
  for (const auto& c : checkpoints) {
    owned.push_back(QConformer::load(c.dir, vocab));
    models.emplace_back(c.id, owned.back().get());
  }
  return cache_mlc(models, best, samples, task);
}

const Tensor& speculative_sample(const MlcCache& cache, const std::string& sample_id, double r, Rng& rng) {
  if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("speculative ratio must be in [0, 1]");
  if (!cache.contains_sample(sample_id)) throw UnknownSample("sample '" + sample_id + "' is not in the MLC cache");
  const double u = rng.uniform();
  if (u < r) {
    if (cache.suboptimal().empty()) throw ConfigError("speculative ratio > 0 needs suboptimal checkpoints");
    const auto& id = cache.suboptimal()[rng.uniform_int(cache.suboptimal().size())];
    return cache.get(id, sample_id);
  }
  return cache.get(cache.best(), sample_id);
}

double prefix_tune_step(VirtualPrefix& prefix, AdamW& opt, const FrozenLm& lm, const std::vector<Tensor>& mlcs,
                        const std::vector<std::vector<std::int64_t>>& targets) {
  if (!lm.frozen()) throw FrozenViolation("prefix tuning requires a frozen LM");
  if (mlcs.size() != targets.size() || mlcs.empty()) throw ShapeMismatch("prefix_tune_step needs one target per MLC");
  Tensor loss;
  for (std::size_t i = 0; i < mlcs.size(); ++i) {
    const Tensor l = lm_conditioned_nll(lm, prefix.conditioning(mlcs[i]), targets[i]);
    loss = loss.defined() ? add(loss, l) : l;
  }
  loss = scale(loss, 1.0 / static_cast<double>(mlcs.size()));
  opt.zero_grad();
  backward(loss);
  for (const auto& p : lm.params().all()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad())
      if (g != 0.0) throw FrozenViolation("LM parameter " + p.name + " received a gradient");
  }
  opt.step();
  return loss.item();
}

std::string bridged_generate(const VirtualPrefix& prefix, const FrozenLm& lm, const QConformer& encoder,
                             const EegSample& sample, const DecodeMode& mode, std::int64_t max_len) {
  const Tensor mlc = encode_mlc(encoder, sample, "translation");
  NoGradScope no_grad;
  return lm.vocab().decode(lm_generate(lm, prefix.conditioning(mlc), mode, max_len));
}

}  // namespace belt2
