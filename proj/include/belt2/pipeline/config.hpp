#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "belt2/data/split.hpp"
#include "belt2/decoderlm/decoderlm.hpp"
#include "belt2/objectives/objectives.hpp"
#include "belt2/qconformer/qconformer.hpp"

namespace belt2 {

struct TrainConfig {
  double lr = 5e-6;
  int epochs = 60;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool grad_norm = true;
  std::vector<std::string> tasks = {"translation"};
  std::string lr_schedule = "constant";  // or "cosine"
  double weight_decay = 0.01;
  int eval_every = 1;
  int snapshot_every = 4;
  std::int64_t decode_max_len = 48;
  std::string decoding = "greedy";
  std::string init;  // encoder checkpoint to start from, empty for none
};

struct LossConfig {
  std::array<double, 4> lambda{1.0, 10.0, 10.0, 0.001};  // vq, bpe, elm, neg
  std::array<double, 4> vq_terms{1.0, 1.0, 1.0, 1.0};    // codebook, commitment, entropy, recon
  int n_neg = 4;
  bool normalize = true;
};

struct BridgeConfig {
  int prefix_len = 8;
  int n_ckpt = 15;
  double ratio = 0.3;
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 8;
  std::string adapter = "auto";
  std::string encoder_dir;
  std::string lm_dir;
};

struct DataConfig {
  std::string path;
  std::string split = "cross_sentence";
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::string held_out_subject;
  std::int64_t D = 840;
  int bpe_merges = 200;
  std::string eval_split = "val";
};

/// Sections: model, train, loss, bridge, lm, data. model.input_dim always
/// follows data.D.
struct RunConfig {
  QConformerConfig model;
  TrainConfig train;
  LossConfig loss;
  BridgeConfig bridge;
  LmConfig lm;
  DataConfig data;

  LossWeights weights() const;
  SplitSpec split_spec() const;
  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys missing from `j` keep their defaults; unknown keys throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  /// Reads a JSON file (empty path: defaults), then applies "a.b=value"
  /// overrides. Values parse as JSON, falling back to a plain string.
  static RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
};

/// Applies one "a.b=value" override to a config document. Throws ConfigError
/// when the key path does not exist.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace belt2
