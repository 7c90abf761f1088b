#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "belt2/data/synth.hpp"
#include "belt2/error.hpp"
#include "belt2/numcore/gradcheck.hpp"
#include "belt2/qconformer/qconformer.hpp"
#include "test_util.hpp"

namespace belt2 {
namespace {

using testing::GradMode;
using testing::random_tensor;

QConformerConfig tiny() {
  QConformerConfig c;
  c.input_dim = 8;
  c.d_model = 8;
  c.n_heads = 2;
  c.ff_dim = 16;
  c.conv_kernel = 3;
  c.n_encoder_blocks = 1;
  c.n_decoder_blocks = 1;
  c.dropout = 0.0;
  c.codebook_size = 6;
  c.d_code = 4;
  c.n_queries = 3;
  c.d_q = 8;
  c.cf_layers = 2;
  c.text_layers = 1;
  c.max_positions = 16;
  return c;
}

BpeVocab tiny_vocab() { return train_bpe({"the cat sat on the mat", "a dog ran"}, 10, kVerbalizers); }

std::vector<EegSample> tiny_samples() { return synth_generate({"the cat sat", "a dog ran on the mat"}, 8, 0.1, 4); }

std::vector<const EegSample*> ptrs(const std::vector<EegSample>& s) {
  std::vector<const EegSample*> out;
  for (const auto& x : s) out.push_back(&x);
  return out;
}

TEST(ConformerBlock, PreservesShape) {
  ParameterSet ps;
  Rng rng(1);
  auto b = ConformerBlock::create(ps, "b", {8, 2, 16, 3}, rng);
  for (std::int64_t L : {1, 4, 7}) {
    auto y = b.forward(random_tensor({L, 8}, rng, 1.0, false), {{0, L}}, ForwardCtx{true});
    EXPECT_EQ(y.shape(), (Shape{L, 8}));
  }
  EXPECT_THROW(b.forward(Tensor::zeros({3, 6}), {{0, 3}}, {}), ShapeMismatch);
}

TEST(ConformerBlock, ZeroWeightsGiveIdentity) {
  GradMode mode;
  ParameterSet ps;
  Rng rng(2);
  ConformerBlockConfig cfg{8, 2, 16, 3};
  cfg.ln_eps = 0.0;
  auto b = ConformerBlock::create(ps, "b", cfg, rng);
  for (const auto& p : ps.all()) {
    const auto& n = p.name;
    const bool keep = n.ends_with(".gain") || n.ends_with(".gamma") || n.ends_with(".running_var");
    if (!keep) {
      Tensor t = p.tensor;
      for (auto& v : t.mutable_data()) v = 0.0;
    }
  }
  // Rows with zero mean and unit variance are fixed points of the final norm.
  auto x = layer_norm(random_tensor({5, 8}, rng, 1.0, false), Tensor::full({8}, 1.0), Tensor::zeros({8}), 0.0);
  auto y = b.forward(x, {{0, 5}}, ForwardCtx{true});
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-12);
}

TEST(ConformerBlock, GradientMatchesFiniteDifferences) {
  GradMode mode;
  ParameterSet ps;
  Rng rng(3);
  auto b = ConformerBlock::create(ps, "b", {4, 2, 8, 3}, rng);
  auto x = random_tensor({5, 4}, rng);
  auto w = random_tensor({5, 4}, rng, 1.0, false);
  Segments seg{{0, 2}, {2, 3}};
  auto r = check_gradients([&] { return sum(mul(b.forward(x, seg, ForwardCtx{false}), w)); }, {x});
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(ConformerBlock, SegmentsDoNotInteractInEval) {
  GradMode mode;
  ParameterSet ps;
  Rng rng(4);
  auto b = ConformerBlock::create(ps, "b", {8, 2, 16, 3}, rng);
  auto a = random_tensor({3, 8}, rng, 1.0, false);
  auto c = random_tensor({4, 8}, rng, 1.0, false);
  auto packed = b.forward(concat_rows({a, c}), {{0, 3}, {3, 4}}, {});
  auto alone = b.forward(a, {{0, 3}}, {});
  for (std::int64_t i = 0; i < alone.numel(); ++i) EXPECT_DOUBLE_EQ(packed.data()[i], alone.data()[i]);
}

TEST(Quantize, NearestEntry) {
  auto cb = Tensor::matrix({{0.0, 0.0}, {1.0, 1.0}});
  auto q = quantize(cb, Tensor::matrix({{0.9, 0.8}}));
  EXPECT_EQ(q.indices, (std::vector<std::int64_t>{1}));
  EXPECT_EQ(q.z_q.to_vector(), (std::vector<double>{1.0, 1.0}));
}

TEST(Quantize, ExactHitAndTies) {
  auto cb = Tensor::matrix({{0, 0}, {1, 0}, {0, 1}, {2, 2}, {-1, 0}});
  auto q = quantize(cb, Tensor::matrix({{2, 2}, {0.5, 0.0}, {0.5, 0.5}}));
  EXPECT_EQ(q.indices, (std::vector<std::int64_t>{3, 0, 0}));
  EXPECT_EQ(slice_rows(q.z_q, 0, 1).to_vector(), (std::vector<double>{2, 2}));
  EXPECT_THROW(quantize(Tensor::from({0, 2}, {}), Tensor::matrix({{1, 1}})), EmptyCodebook);
}

TEST(Quantize, OutputsAreExactCodebookRowsAndUsageSumsToOne) {
  Rng rng(6);
  auto cb = random_tensor({7, 3}, rng, 1.0, false);
  auto h = random_tensor({20, 3}, rng, 1.3, false);
  auto q = quantize(cb, h);
  for (std::int64_t i = 0; i < 20; ++i)
    EXPECT_EQ(slice_rows(q.z_q, i, 1).to_vector(), slice_rows(cb, q.indices[i], 1).to_vector());
  double s = 0;
  for (double p : q.usage.data()) {
    EXPECT_GE(p, 0.0);
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_NEAR(usage_entropy({5, 5}), std::log(2.0), 1e-12);
}

TEST(Quantize, StraightThroughJacobianIsIdentity) {
  GradMode mode;
  Rng rng(7);
  auto cb = random_tensor({5, 3}, rng);
  auto h = random_tensor({4, 3}, rng);
  auto w = random_tensor({4, 3}, rng, 1.0, false);
  auto q = quantize(cb, h);
  backward(sum(mul(square(q.z_q), w)));
  // d/dh = d/dz evaluated at z = codes: 2 * z * w.
  for (std::int64_t i = 0; i < h.numel(); ++i) EXPECT_EQ(h.grad()[i], 2.0 * q.codes.data()[i] * w.data()[i]);
}

TEST(QConformer, EncodeShapesAndDeterminism) {
  QConformer m(tiny(), tiny_vocab(), 1);
  auto s = tiny_samples();
  auto batch = pack_samples(ptrs(s), 8);
  auto h1 = m.encode_continuous(batch, {});
  auto h2 = m.encode_continuous(batch, {});
  EXPECT_EQ(h1.shape(), (Shape{s[0].length() + s[1].length(), 4}));
  EXPECT_EQ(h1.to_vector(), h2.to_vector());
  auto changed = s;
  changed[0].words[1].eeg[0] += 1.0;
  auto h3 = m.encode_continuous(pack_samples(ptrs(changed), 8), {});
  EXPECT_NE(h1.to_vector(), h3.to_vector());
  EXPECT_THROW(pack_samples(ptrs(s), 9), DimMismatch);
}

TEST(QConformer, ReconstructShapeAndFinite) {
  QConformer m(tiny(), tiny_vocab(), 1);
  auto s = tiny_samples();
  auto batch = pack_samples(ptrs(s), 8);
  auto q = m.quantize(m.encode_continuous(batch, {}));
  auto e_hat = m.reconstruct(q.z_q, batch.segments, {});
  EXPECT_EQ(e_hat.shape(), batch.e.shape());
  for (double v : e_hat.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(QConformer, MlcShapeIndependentOfLength) {
  QConformer m(tiny(), tiny_vocab(), 1);
  m.register_task("translation");
  Rng rng(9);
  for (std::int64_t L : {1, 5, 12}) EXPECT_EQ(m.mlc("translation", random_tensor({L, 4}, rng, 1.0, false), {}).shape(), (Shape{3, 8}));
  EXPECT_THROW(m.mlc("summary", Tensor::zeros({2, 4}), {}), UnknownTask);
}

TEST(QConformer, PromptsChangeMlc) {
  QConformer m(tiny(), tiny_vocab(), 1);
  m.register_task("translation");
  m.register_task("summary");
  Rng rng(10);
  auto z = random_tensor({4, 4}, rng, 1.0, false);
  EXPECT_NE(m.mlc("translation", z, {}).to_vector(), m.mlc("summary", z, {}).to_vector());
}

TEST(QConformer, ZeroCrossAttentionMakesMlcIgnoreTokens) {
  QConformer m(tiny(), tiny_vocab(), 1);
  m.register_task("translation");
  for (const auto& p : m.params().all()) {
    if (p.name.find("cross_attn.o.") != std::string::npos) {
      Tensor t = p.tensor;
      for (auto& v : t.mutable_data()) v = 0.0;
    }
  }
  Rng rng(11);
  auto a = m.mlc("translation", random_tensor({3, 4}, rng, 1.0, false), {});
  auto b = m.mlc("translation", random_tensor({6, 4}, rng, 1.0, false), {});
  EXPECT_EQ(a.to_vector(), b.to_vector());
}

TEST(QConformer, CrossAttentionFrequency) {
  auto cfg = tiny();
  cfg.cf_layers = 4;
  cfg.cross_attn_freq = 2;
  QConformer m(cfg, tiny_vocab(), 1);
  int cross = 0;
  for (const auto& p : m.params().all())
    if (p.name.starts_with("cformer.") && p.name.ends_with("cross_attn.q.weight")) ++cross;
  EXPECT_EQ(cross, 2);
}

TEST(QConformer, DecodeText) {
  QConformer m(tiny(), tiny_vocab(), 1);
  m.register_task("translation");
  Rng rng(12);
  auto mlc = m.mlc("translation", random_tensor({3, 4}, rng, 1.0, false), {});
  EXPECT_TRUE(m.decode_text(mlc, DecodeMode::greedy(), 0).empty());
  auto g1 = m.decode_text(mlc, DecodeMode::greedy(), 8);
  EXPECT_EQ(g1, m.decode_text(mlc, DecodeMode::greedy(), 8));
  EXPECT_LE(g1.size(), 8u);
  EXPECT_EQ(m.decode_text(mlc, DecodeMode::beam_search(1), 8), g1);
  EXPECT_LE(m.decode_text(mlc, DecodeMode::beam_search(3), 5).size(), 5u);
}

TEST(QConformer, ClassifySentiment) {
  QConformer m(tiny(), tiny_vocab(), 1);
  m.register_task("sentiment");
  Rng rng(13);
  auto p = m.classify_sentiment(m.mlc("sentiment", random_tensor({3, 4}, rng, 1.0, false), {}));
  ASSERT_EQ(p.probs.size(), 3u);
  EXPECT_NEAR(p.probs[0] + p.probs[1] + p.probs[2], 1.0, 1e-6);
  EXPECT_GE(p.label, 0);
  EXPECT_LT(p.label, 3);
}

TEST(QConformer, RegisterTaskIsolation) {
  QConformer m(tiny(), tiny_vocab(), 1);
  auto q = m.register_task("translation");
  EXPECT_EQ(q.shape(), (Shape{3, 8}));
  EXPECT_THROW(m.register_task("translation"), DuplicateTask);
  EXPECT_THROW(m.register_task("poetry"), UnknownTask);
  Rng rng(14);
  auto z = random_tensor({4, 4}, rng, 1.0, false);
  auto before = m.mlc("translation", z, {}).to_vector();
  m.params().set_frozen(true);
  auto s = m.register_task("summary");
  EXPECT_TRUE(s.requires_grad());
  EXPECT_EQ(m.mlc("translation", z, {}).to_vector(), before);
}

TEST(QConformer, CheckpointRoundTrip) {
  auto vocab = tiny_vocab();
  QConformer m(tiny(), vocab, 5);
  m.register_task("translation");
  m.register_task("sentiment");
  auto dir = std::filesystem::temp_directory_path() / "belt2_qc_ckpt";
  std::filesystem::remove_all(dir);
  m.save(dir, CheckpointInfo{});
  auto back = QConformer::load(dir, vocab);
  EXPECT_EQ(back->tasks(), m.tasks());
  Rng rng(15);
  auto z = random_tensor({3, 4}, rng, 1.0, false);
  EXPECT_EQ(back->mlc("sentiment", z, {}).to_vector(), m.mlc("sentiment", z, {}).to_vector());
  auto other = train_bpe({"completely different words"}, 5, kVerbalizers);
  EXPECT_THROW(QConformer::load(dir, other), CheckpointMismatch);
}

TEST(QConformer, ConfigValidation) {
  auto c = tiny();
  c.conv_kernel = 4;
  EXPECT_THROW(QConformer(c, tiny_vocab(), 1), ConfigError);
  c = tiny();
  c.n_heads = 3;
  EXPECT_THROW(QConformer(c, tiny_vocab(), 1), ConfigError);
  EXPECT_THROW(QConformer(tiny(), train_bpe({"abc"}, 1), 1), ConfigError);
  EXPECT_EQ(QConformerConfig::from_json(tiny().to_json()).to_json(), tiny().to_json());
}

}  // namespace
}  // namespace belt2
