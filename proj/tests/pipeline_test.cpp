#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "belt2/error.hpp"
#include "belt2/pipeline/config.hpp"

namespace fs = std::filesystem;
using namespace belt2;

namespace {

const char* kTinyConfig = R"({
  "model": {"d_model": 8, "n_heads": 2, "ff_dim": 8, "conv_kernel": 3, "n_encoder_blocks": 1,
            "n_decoder_blocks": 1, "codebook_size": 8, "d_code": 8, "n_queries": 2, "d_q": 8,
            "cf_layers": 1, "text_layers": 1, "max_positions": 48},
  "train": {"lr": 0.002, "epochs": 2, "snapshot_every": 1, "decode_max_len": 8},
  "lm": {"d_model": 8, "n_heads": 2, "ff_dim": 8, "n_layers": 1, "max_len": 48, "epochs": 2},
  "bridge": {"n_ckpt": 1, "epochs": 1, "prefix_len": 2},
  "data": {"D": 8, "bpe_merges": 20}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("belt2_pipeline_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "c.json") << kTinyConfig;
    ASSERT_EQ(run("gen-data --sentences 12 --dim 8 --seed 3 --out d.jsonl"), 0);
    ASSERT_EQ(run("train --stage encoder --config c.json --data d.jsonl --out enc"), 0);
    ASSERT_EQ(run("train --stage lm --config c.json --data d.jsonl --out lm"), 0);
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static int run(const std::string& args, const std::string& stdout_file = "") {
    const std::string cmd = "cd '" + dir_.string() + "' && '" BELT2_BIN "' " + args + " > '" +
                            (stdout_file.empty() ? std::string("/dev/null") : stdout_file) + "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST(Config, DefaultsValidate) {
  const auto cfg = RunConfig::from_json(nlohmann::json::object());
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.model.input_dim, cfg.data.D);
  EXPECT_EQ(cfg.train.tasks, std::vector<std::string>{"translation"});
}

TEST(Config, OverrideParsesJsonValues) {
  auto doc = RunConfig::from_json(nlohmann::json::object()).to_json();
  apply_override(doc, "train.lr=0.25");
  apply_override(doc, "train.tasks=[\"translation\",\"sentiment\"]");
  apply_override(doc, "train.lr_schedule=cosine");
  const auto cfg = RunConfig::from_json(doc);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.25);
  EXPECT_EQ(cfg.train.tasks.size(), 2u);
  EXPECT_EQ(cfg.train.lr_schedule, "cosine");
}

TEST(Config, UnknownKeyRejected) {
  auto doc = RunConfig::from_json(nlohmann::json::object()).to_json();
  EXPECT_THROW(apply_override(doc, "train.nope=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"model", {{"width", 3}}}}), ConfigError);
}

TEST(Config, RoundTripsThroughJson) {
  auto cfg = RunConfig::from_json({{"train", {{"epochs", 7}}}, {"bridge", {{"ratio", 0.5}}}});
  const auto again = RunConfig::from_json(cfg.to_json());
  EXPECT_EQ(again.to_json().dump(), cfg.to_json().dump());
}

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --sentences 12 --dim 8 --seed 3 --out d2.jsonl"), 0);
  EXPECT_EQ(slurp(dir_ / "d.jsonl"), slurp(dir_ / "d2.jsonl"));
}

TEST_F(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(run("gen-data --sentences 12 --dim 4 --out x.jsonl"), 2);
  EXPECT_EQ(run("train --stage encoder --config c.json --data d.jsonl --out t1 --tasks bogus"), 2);
  EXPECT_EQ(run("train --stage encoder --config c.json --data d.jsonl --out t2 --set train.nope=1"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
}

TEST_F(Cli, MissingDataExitsThree) {
  EXPECT_EQ(run("train --stage encoder --config c.json --data missing.jsonl --out t3"), 3);
}

TEST_F(Cli, EncoderRunLayout) {
  for (const char* f : {"config.json", "vocab.json", "metrics.csv", "best/params.bin", "last/params.bin",
                        "snapshots/epoch_0001/params.bin", "snapshots/epoch_0002/manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "enc" / f)) << f;
}

TEST_F(Cli, GreedyDecodeIsDeterministic) {
  ASSERT_EQ(run("decode --ckpt enc --input d.jsonl --greedy", (dir_ / "g1.txt").string()), 0);
  ASSERT_EQ(run("decode --ckpt enc --input d.jsonl --greedy", (dir_ / "g2.txt").string()), 0);
  const auto a = slurp(dir_ / "g1.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "g2.txt"));
}

TEST_F(Cli, EvalPrintsReport) {
  ASSERT_EQ(run("eval --ckpt enc --split train", (dir_ / "report.json").string()), 0);
  const auto report = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_TRUE(report.contains("bleu"));
  EXPECT_GT(report.at("n_samples").get<int>(), 0);
}

TEST_F(Cli, MismatchedVocabExitsFour) {
  ASSERT_EQ(run("gen-data --sentences 30 --dim 8 --seed 9 --out e.jsonl"), 0);
  ASSERT_EQ(run("train --stage lm --config c.json --data e.jsonl --out lm2 --set data.bpe_merges=35"), 0);
  EXPECT_EQ(run("eval --ckpt enc --split train --vocab lm2/vocab.json"), 4);
}

TEST_F(Cli, BridgeNeedsBestCheckpoint) {
  fs::create_directories(dir_ / "nobest");
  fs::copy(dir_ / "enc" / "snapshots", dir_ / "nobest" / "snapshots", fs::copy_options::recursive);
  fs::copy_file(dir_ / "enc" / "config.json", dir_ / "nobest" / "config.json");
  fs::copy_file(dir_ / "enc" / "vocab.json", dir_ / "nobest" / "vocab.json");
  EXPECT_EQ(run("train --stage bridge --config c.json --data d.jsonl --out b0 --set bridge.encoder_dir=nobest "
                "--set bridge.lm_dir=lm"),
            4);
}

TEST_F(Cli, BridgeRunAndBridgedDecode) {
  ASSERT_EQ(run("train --stage bridge --config c.json --data d.jsonl --out br --set bridge.encoder_dir=enc "
                "--set bridge.lm_dir=lm"),
            0);
  for (const char* f : {"config.json", "metrics.csv", "bridge_stats.json", "mlc_cache.bin", "mlc_cache.json"})
    EXPECT_TRUE(fs::exists(dir_ / "br" / f)) << f;
  const auto stats = nlohmann::json::parse(slurp(dir_ / "br" / "bridge_stats.json"));
  EXPECT_EQ(stats.at("cache_entries").get<int>(), 2 * 10);
  ASSERT_EQ(run("decode --ckpt br --mode bridged --input d.jsonl --greedy", (dir_ / "b1.txt").string()), 0);
  ASSERT_EQ(run("decode --ckpt br --mode bridged --input d.jsonl --greedy", (dir_ / "b2.txt").string()), 0);
  EXPECT_EQ(slurp(dir_ / "b1.txt"), slurp(dir_ / "b2.txt"));
}
