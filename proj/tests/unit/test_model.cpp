#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gradcheck.hpp"
#include "mrf/error.hpp"
#include "mrf/model/archive.hpp"
#include "mrf/model/checkpoint.hpp"
#include "mrf/model/tokenizer.hpp"
#include "mrf/model/transformer.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/rng.hpp"
#include "mrf/upcycle/upcycler.hpp"

using namespace mrf;
using namespace mrf::model;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 4;
  c.head_dim = 2;
  c.n_layers = 2;
  c.ffn_hidden = 16;
  c.seq_len = 12;
  return c;
}

TokenBatch text_batch(const std::string& text, std::size_t batch = 1) {
  TokenBatch b;
  const auto ids = encode_document(text);
  b.batch = batch;
  b.seq = ids.size() - 1;
  for (std::size_t r = 0; r < batch; ++r) {
    b.inputs.insert(b.inputs.end(), ids.begin(), ids.end() - 1);
    b.targets.insert(b.targets.end(), ids.begin() + 1, ids.end());
  }
  return b;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mrf_test_" + name);
  fs::remove_all(p);
  return p;
}

Checkpoint small_moe(moe::RouterMode mode, std::uint64_t seed) {
  const Checkpoint dense = init_dense(small_config(), seed);
  Rng rng(seed + 1);
  upcycle::HeadStats stats;
  stats.config = dense.config();
  stats.tokens = 1;
  for (std::size_t l = 0; l < 2; ++l) {
    std::vector<upcycle::HeadStat> heads;
    for (std::size_t h = 0; h < 4; ++h) heads.push_back({Tensor::randn({2, 8}, 0.3, rng), Tensor::randn({2}, 0.3, rng)});
    stats.layers.push_back(heads);
  }
  moe::MoEConfig mc;
  mc.n_experts = 4;
  mc.n_routers = 2;
  mc.router_mode = mode;
  const upcycle::RouterBank bank = upcycle::build_router_bank(stats, mc);
  return upcycle::upcycle(dense, mc, &bank, {seed, 0.02});
}

}  // namespace

TEST_CASE("byte tokenizer") {
  const auto ids = encode_document("hi\xff");
  REQUIRE(ids.size() == 5);
  CHECK(ids[0] == kBos);
  CHECK(ids[1] == 'h');
  CHECK(ids[3] == 255);
  CHECK(ids[4] == kEos);
  CHECK(kByteVocabSize == 259);
}

TEST_CASE("architecture validation") {
  ModelConfig c = small_config();
  c.d_model = 9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.n_heads = 3;
  c.d_model = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("frozen checkpoints refuse mutation") {
  Checkpoint ckpt = init_dense(small_config(), 1);
  CHECK_NOTHROW(ckpt.validate());
  ckpt.freeze();
  CHECK_THROWS_AS(ckpt.set("tok_emb", Tensor::zeros({259, 8})), StateError);
  CHECK_THROWS_AS(ckpt.mutable_tensor("tok_emb"), StateError);
  CHECK_THROWS_AS(ckpt.parameters(), StateError);
  CHECK_FALSE(ckpt.clone().frozen());

  Checkpoint other = init_dense(small_config(), 1);
  CHECK_THROWS_AS(other.set("tok_emb", Tensor::zeros({3, 3})), ShapeError);
  CHECK_THROWS_AS(other.tensor("nope"), ShapeError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  for (const bool moe_model : {false, true}) {
    Checkpoint ckpt = moe_model ? small_moe(moe::RouterMode::mixture, 2) : init_dense(small_config(), 2);
    ckpt.freeze();
    const fs::path dir = scratch(moe_model ? "ckpt_moe" : "ckpt_dense");
    save_checkpoint(ckpt, dir);
    const Checkpoint back = load_checkpoint(dir);
    CHECK(back.frozen());
    CHECK(back.is_moe() == moe_model);
    CHECK(back.config() == ckpt.config());
    if (moe_model) CHECK(back.moe() == ckpt.moe());
    REQUIRE(back.names() == ckpt.names());
    for (const auto& name : ckpt.names()) CHECK(back.tensor(name).bitwise_equal(ckpt.tensor(name)));
    fs::remove_all(dir);
  }
}

TEST_CASE("corrupt archives are rejected") {
  const Checkpoint ckpt = init_dense(small_config(), 3);
  const fs::path dir = scratch("ckpt_corrupt");
  save_checkpoint(ckpt, dir);

  fs::resize_file(dir / kWeightsFile, fs::file_size(dir / kWeightsFile) - 8);
  CHECK_THROWS_AS(load_checkpoint(dir), FormatError);

  save_checkpoint(ckpt, dir);
  nlohmann::json meta;
  std::ifstream(dir / kManifestFile) >> meta;
  meta["format_version"] = 99;
  std::ofstream(dir / kManifestFile) << meta.dump();
  CHECK_THROWS_AS(load_checkpoint(dir), FormatError);

  save_checkpoint(ckpt, dir);
  std::ifstream(dir / kManifestFile) >> meta;
  meta["tensors"].erase(0);
  std::ofstream(dir / kManifestFile) << meta.dump();
  CHECK_THROWS(load_checkpoint(dir));

  std::ofstream(dir / kManifestFile) << "{not json";
  CHECK_THROWS_AS(load_checkpoint(dir), FormatError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing")), DataError);
  fs::remove_all(dir);
}

TEST_CASE("fresh dense model predicts near-uniformly") {
  ModelConfig c = small_config();
  c.seq_len = 64;
  const Checkpoint ckpt = init_dense(c, 4);
  const TokenBatch b = text_batch("The quick brown fox jumps over the lazy dog, twice over.", 2);
  const double loss = cross_entropy(forward(ckpt, b).logits, b.targets, kPad).item();
  CHECK(loss == Approx(std::log(259.0)).epsilon(0.01));
}

TEST_CASE("forward pass is causal and deterministic") {
  for (const bool moe_model : {false, true}) {
    const Checkpoint ckpt = moe_model ? small_moe(moe::RouterMode::mixture, 5) : init_dense(small_config(), 5);
    TokenBatch a = text_batch("abcdefghij");
    TokenBatch b = a;
    b.inputs[7] = 'Z';
    const ForwardResult fa = forward(ckpt, a), fb = forward(ckpt, b);
    const std::size_t v = 259;
    // Expert matmuls see different row sets once a later token reroutes, so
    // earlier rows may differ in the last bits; anything more is a leak.
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t c = 0; c < v; ++c) CHECK(fa.logits.at(t, c) == Approx(fb.logits.at(t, c)).epsilon(1e-12));
    bool later_changed = false;
    for (std::size_t c = 0; c < v; ++c) later_changed |= fa.logits.at(7, c) != fb.logits.at(7, c);
    CHECK(later_changed);
    CHECK(forward(ckpt, a).logits.bitwise_equal(fa.logits));
  }
}

TEST_CASE("forward exposes per-layer traces") {
  const Checkpoint ckpt = small_moe(moe::RouterMode::mixture, 6);
  const TokenBatch b = text_batch("routing", 2);
  const ForwardResult f = forward(ckpt, b, {.keep_attention = true});
  REQUIRE(f.layers.size() == 2);
  CHECK(f.layers[0].keys.shape() == Shape{b.inputs.size(), 8});
  CHECK(f.layers[0].ffn_input.shape() == Shape{b.inputs.size(), 8});
  CHECK(f.layers[1].attention.size() == 2 * 4 * b.seq * b.seq);
  REQUIRE(f.layers[1].routing.has_value());
  CHECK(f.layers[1].routing->tokens() == b.inputs.size());
  CHECK(f.aux_loss.item() > 0.0);
  CHECK(f.z_loss.item() > 0.0);

  TokenBatch too_long = text_batch("this text is too long for twelve positions");
  CHECK_THROWS_AS(forward(ckpt, too_long), ShapeError);
  TokenBatch bad = b;
  bad.inputs.pop_back();
  CHECK_THROWS_AS(forward(ckpt, bad), ShapeError);
}

TEST_CASE("loss composition") {
  for (auto mode : {moe::RouterMode::mixture, moe::RouterMode::vanilla, moe::RouterMode::mlp}) {
    const Checkpoint ckpt = small_moe(mode, 7);
    const LossTerms t = training_loss(ckpt, text_batch("composition", 2));
    CHECK(std::abs(t.total.item() - (t.lm.item() + t.aux.item() + t.z.item())) < 1e-12);
  }
  const Checkpoint dense = init_dense(small_config(), 7);
  const LossTerms d = training_loss(dense, text_batch("dense"));
  CHECK(d.aux.item() == 0.0);
  CHECK(d.total.item() == d.lm.item());
}

TEST_CASE("end-to-end MoE model gradients match finite differences") {
  ModelConfig c;
  c.d_model = 4;
  c.n_heads = 2;
  c.head_dim = 2;
  c.n_layers = 1;
  c.ffn_hidden = 4;
  c.seq_len = 4;
  c.vocab_size = 259;
  Checkpoint dense = init_dense(c, 8);
  // Init-scale weights give gradients near round-off; scale them up so the
  // relative comparison is meaningful.
  for (const auto& name : dense.names()) {
    if (dense.tensor(name).rank() == 2) {
      for (double& w : dense.mutable_tensor(name).mutable_data()) w *= 25.0;
    }
  }
  moe::MoEConfig mc;
  mc.n_experts = 2;
  mc.n_routers = 2;
  mc.top_k = 1;
  upcycle::HeadStats stats;
  stats.config = c;
  stats.tokens = 1;
  Rng rng(9);
  stats.layers.push_back({{Tensor::randn({2, 4}, 1.0, rng), Tensor::randn({2}, 1.0, rng)},
                          {Tensor::randn({2, 4}, 1.0, rng), Tensor::randn({2}, 1.0, rng)}});
  const auto bank = upcycle::build_router_bank(stats, mc);
  Checkpoint ckpt = upcycle::upcycle(dense, mc, &bank);
  // Break expert symmetry so expert gradients differ.
  for (double& w : ckpt.mutable_tensor("layer.0.expert.1.w1").mutable_data()) w += rng.normal(0.0, 0.3);
  TokenBatch b;
  b.batch = 1;
  b.seq = 3;
  b.inputs = {kBos, 'a', 'b'};
  b.targets = {'a', 'b', kEos};
  std::vector<Tensor> params;
  for (const std::string name : {"layer.0.router.0.w", "layer.0.router.1.w", "layer.0.expert.0.key.0",
                                 "layer.0.expert.1.w1", "layer.0.expert.0.w2", "layer.0.attn.wq",
                                 "layer.0.ffn_norm.g", "pos_emb"}) {
    params.push_back(ckpt.mutable_tensor(name));
  }
  const auto res = testing::check_gradients(params, [&] { return training_loss(ckpt, b).total; });
  INFO("worst " << res.worst << " abs " << res.max_abs_error);
  CHECK(res.max_rel_error < 1e-6);
}
