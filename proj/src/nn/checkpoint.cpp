#include "belt2/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "belt2/error.hpp"

namespace belt2 {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "params.bin is written in native little-endian order");

void save_checkpoint(const fs::path& dir, const ParameterSet& ps, const CheckpointInfo& info) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  json params = json::array();
  std::int64_t offset = 0;
  std::vector<float> blob;
  blob.reserve(static_cast<std::size_t>(ps.numel()));
  for (const auto& p : ps.all()) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"trainable", p.trainable}});
    for (double v : p.tensor.data()) blob.push_back(static_cast<float>(v));
    offset += p.tensor.numel();
  }
  json manifest = {{"format", kCheckpointFormat}, {"config", info.config}, {"seed", info.seed},
                   {"epoch", info.epoch},         {"metric", info.metric}, {"extra", info.extra},
                   {"params", params}};

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + (dir / "params.bin").string());
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  if (!man) throw IoError("cannot write " + (dir / "manifest.json").string());
  man << manifest.dump(2) << '\n';
}

namespace {

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointMismatch("no manifest.json in " + dir.string());
  try {
    json m = json::parse(in);
    if (m.value("format", "") != kCheckpointFormat) throw CheckpointMismatch("unknown checkpoint format in " + dir.string());
    return m;
  } catch (const json::exception& e) {
    throw CheckpointMismatch("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const json m = read_manifest(dir);
  CheckpointInfo info;
  info.config = m.value("config", json::object());
  info.seed = m.value("seed", std::uint64_t{0});
  info.epoch = m.value("epoch", 0);
  info.metric = m["metric"].is_number() ? m["metric"].get<double>() : 0.0;
  info.extra = m.value("extra", json::object());
  return info;
}

void load_checkpoint_params(const fs::path& dir, ParameterSet& ps) {
  const json m = read_manifest(dir);
  const auto& entries = m.at("params");
  if (entries.size() != ps.all().size()) {
    throw CheckpointMismatch("checkpoint has " + std::to_string(entries.size()) + " tensors, model has " +
                             std::to_string(ps.all().size()));
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw CheckpointMismatch("no params.bin in " + dir.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != static_cast<std::size_t>(ps.numel()) * sizeof(float)) {
    throw CheckpointMismatch("params.bin size " + std::to_string(bytes.size()) + " does not match model");
  }

  std::unordered_map<std::string, const json*> by_name;
  for (const auto& e : entries) by_name[e.at("name").get<std::string>()] = &e;
  for (const auto& p : ps.all()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointMismatch("checkpoint lacks parameter '" + p.name + "'");
    const Shape shape = it->second->at("shape").get<Shape>();
    if (shape != p.tensor.shape()) {
      throw CheckpointMismatch("parameter '" + p.name + "' has shape " + shape_str(shape) + " in checkpoint, " +
                               shape_str(p.tensor.shape()) + " in model");
    }
    const auto offset = it->second->at("offset").get<std::int64_t>();
    Tensor t = p.tensor;
    auto dst = t.mutable_data();
    if (static_cast<std::size_t>(offset) + dst.size() > bytes.size() / sizeof(float)) {
      throw CheckpointMismatch("parameter '" + p.name + "' runs past the end of params.bin");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + (static_cast<std::size_t>(offset) + i) * sizeof(float), sizeof(float));
      dst[i] = static_cast<double>(f);
    }
  }
}

}  // namespace belt2
