#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "sdfp/checkpoint.hpp"
#include "sdfp/io_util.hpp"
#include "sdfp/kernels.hpp"
#include "test_support.hpp"

namespace sdfp {
namespace {

using testing::random_tokens;
using testing::randomized_model;
using testing::tiny_config;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sdfp_unit_" + name);
}

TEST(ModelConfig, ValidationNamesTheField) {
  ModelConfig c;
  c.n_heads = 3;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "n_heads");
  }
  c = ModelConfig{};
  c.max_context = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.n_layers = 0;
  EXPECT_THROW(init_model<float>(c), ConfigError);
}

TEST(InitModel, DeterministicPerSeed) {
  ModelConfig c = tiny_config();
  const auto a = init_model<float>(c);
  const auto b = init_model<float>(c);
  EXPECT_EQ(a.weights().params(), b.weights().params());
  c.rng_seed += 1;
  const auto other = init_model<float>(c);
  EXPECT_NE(a.weights().params(), other.weights().params());
  EXPECT_EQ(a.mask(), ActiveMask::full(c.n_layers));
}

TEST(InitModel, ResidualProjectionScale) {
  ModelConfig c;
  c.n_layers = 8;
  const auto m = init_model<double>(c);
  const auto& layout = m.weights().layout();
  const auto& w = m.weights().param(layout.sublayer_param({3, SublayerKind::kFfn}, ParamLayout::kWOut));
  double sq = 0.0;
  for (double v : w.data()) sq += v * v;
  const double std_hat = std::sqrt(sq / double(w.size()));
  EXPECT_NEAR(std_hat, 0.02 / std::sqrt(16.0), 0.02 / std::sqrt(16.0) * 0.05);
}

TEST(Forward, FiniteLogitsWithExpectedShape) {
  const auto m = init_model<float>(tiny_config());
  const auto tokens = random_tokens(10, 1);
  const auto logits = forward_logits(m, tokens);
  EXPECT_EQ(logits.shape(), (Shape{10, 257}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, OutOfRangeTokenIsIndexError) {
  const auto m = init_model<float>(tiny_config());
  const std::vector<Token> bad{1, 257};
  EXPECT_THROW(forward_logits(m, bad), IndexError);
}

TEST(Forward, IncrementalMatchesFullSequence) {
  ModelConfig c = tiny_config(3);
  c.max_context = 32;
  const auto m = randomized_model<float>(c, 4, 0.1);
  const auto tokens = random_tokens(16, 2);
  const auto full = forward_logits(m, tokens);
  auto cache = m.new_cache();
  double worst = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto step = forward_logits(m, std::span<const Token>(&tokens[t], 1), &cache);
    for (std::size_t v = 0; v < 257; ++v) worst = std::max(worst, double(std::abs(step[v] - full.at(t, v))));
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_EQ(cache.cached_len(), 16u);

  // Mixed block sizes, as speculative decoding feeds them.
  auto cache2 = m.new_cache();
  std::size_t at = 0;
  for (std::size_t len : {5u, 1u, 4u, 6u}) {
    const auto block = forward_logits(m, std::span<const Token>(tokens).subspan(at, len), &cache2);
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t v = 0; v < 257; ++v) EXPECT_NEAR(block.at(r, v), full.at(at + r, v), 1e-4);
    at += len;
  }
}

TEST(Forward, IncrementalMatchesFullSequenceInDouble) {
  const auto m = randomized_model<double>(tiny_config(), 6, 0.2);
  const auto tokens = random_tokens(12, 3);
  const auto full = forward_logits(m, tokens);
  auto cache = m.new_cache();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto step = forward_logits(m, std::span<const Token>(&tokens[t], 1), &cache);
    for (std::size_t v = 0; v < 257; ++v) {
      EXPECT_LE(std::abs(step[v] - full.at(t, v)), 1e-10 * std::max(1.0, std::abs(full.at(t, v))));
    }
  }
}

TEST(Forward, Causality) {
  const auto m = randomized_model<double>(tiny_config(), 7, 0.2);
  auto tokens = random_tokens(12, 4);
  const auto base = forward_logits(m, tokens);
  const std::size_t t = 5;
  for (std::size_t i = t + 1; i < tokens.size(); ++i) tokens[i] = (tokens[i] + 91) % 257;
  const auto changed = forward_logits(m, tokens);
  for (std::size_t r = 0; r <= t; ++r)
    for (std::size_t v = 0; v < 257; ++v) EXPECT_EQ(base.at(r, v), changed.at(r, v));
  bool later_differs = false;
  for (std::size_t v = 0; v < 257; ++v) later_differs |= base.at(t + 1, v) != changed.at(t + 1, v);
  EXPECT_TRUE(later_differs);
}

TEST(Forward, CapacityError) {
  const auto m = init_model<float>(tiny_config());
  auto cache = m.new_cache();
  const auto tokens = random_tokens(16, 5);
  forward_logits(m, tokens, &cache);
  const Token one = 3;
  EXPECT_THROW(forward_logits(m, std::span<const Token>(&one, 1), &cache), CapacityError);
  EXPECT_THROW(forward_logits(m, random_tokens(17, 5)), CapacityError);
}

TEST(Forward, EmptyMaskIsHeadOfNormalizedEmbeddings) {
  const auto full = randomized_model<double>(tiny_config(), 8, 0.3);
  const auto m = full.with_mask(ActiveMask::none(2));
  const auto tokens = random_tokens(6, 6);
  const auto logits = forward_logits(m, tokens);
  const auto& w = m.weights();
  const auto& L = w.layout();
  const auto& emb = w.param(L.token_embedding());
  const auto& pos = w.param(L.position_embedding());
  const auto& g = w.param(L.final_ln_gamma());
  const auto& b = w.param(L.final_ln_beta());
  const std::size_t d = 8;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = emb.at(tokens[t], i) + pos.at(t, i);
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v;
    mean /= double(d);
    for (double v : x) var += (v - mean) * (v - mean);
    var /= double(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = (x[i] - mean) / std::sqrt(var + kernels::kLayerNormEps) * g[i] + b[i];
    }
    for (std::size_t v = 0; v < 257; ++v) {
      double z = 0.0;
      for (std::size_t i = 0; i < d; ++i) z += x[i] * emb.at(v, i);
      EXPECT_NEAR(logits.at(t, v), z, 1e-12);
    }
  }
}

TEST(Forward, BypassEqualsZeroedOutputProjection) {
  const auto m = randomized_model<double>(tiny_config(), 9, 0.3);
  const auto tokens = random_tokens(8, 7);
  for (auto kind : {SublayerKind::kAttention, SublayerKind::kFfn}) {
    const SublayerId id{1, kind};
    ActiveMask mask = m.mask();
    mask.set(id, false);
    const auto bypassed = forward_logits(m.with_mask(mask), tokens);

    auto params = m.weights().params();
    const auto& L = m.weights().layout();
    for (auto slot : {ParamLayout::kWOut, ParamLayout::kBOut}) {
      for (auto& v : params[L.sublayer_param(id, slot)].mutable_data()) v = 0.0;
    }
    const Model<double> zeroed(std::make_shared<const Weights<double>>(m.config(), params), m.mask());
    EXPECT_EQ(bypassed, forward_logits(zeroed, tokens)) << id.str();
    EXPECT_NE(bypassed, forward_logits(m, tokens));
  }
}

TEST(KvCache, TruncateKeepsPrefixAndIsIdempotent) {
  const auto m = randomized_model<float>(tiny_config(), 10, 0.2);
  const auto tokens = random_tokens(10, 8);
  auto cache = m.new_cache();
  forward_logits(m, tokens, &cache);
  const auto keys_before = cache.keys(0);
  cache.truncate(6);
  EXPECT_EQ(cache.cached_len(), 6u);
  cache.truncate(6);
  EXPECT_EQ(cache.cached_len(), 6u);
  const auto k = cache.keys(0);
  EXPECT_EQ(k.shape(), (Shape{2, 6, 4}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(k[(h * 6 + p) * 4 + i], keys_before[(h * 10 + p) * 4 + i]);
  EXPECT_THROW(cache.truncate(7), UsageError);
  // Refeeding the dropped tokens reproduces the full-sequence logits.
  const auto again = forward_logits(m, std::span<const Token>(tokens).subspan(6), &cache);
  const auto full = forward_logits(m, tokens);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t v = 0; v < 257; ++v) EXPECT_NEAR(again.at(r, v), full.at(6 + r, v), 1e-4);
}

TEST(KvCache, OnlyActiveAttentionLayersAreCached) {
  auto m = init_model<float>(tiny_config(3));
  ActiveMask mask = m.mask();
  mask.set({1, SublayerKind::kAttention}, false);
  const auto cache = m.with_mask(mask).new_cache();
  EXPECT_EQ(cache.attention_layers(), (std::vector<std::uint32_t>{0, 2}));
}

TEST(Loss, UniformLogitsGiveLogVocab) {
  const auto base = init_model<double>(tiny_config());
  std::vector<Tensor<double>> zeros;
  for (const auto& p : base.weights().params()) zeros.push_back(Tensor<double>::zeros(p.shape()));
  const Model<double> m(std::make_shared<const Weights<double>>(base.config(), zeros), base.mask());
  const auto batch = sample_batches(testing::random_corpus(100, 2), 1, 3, 8, 1).front();
  EXPECT_NEAR(loss_on_batch(m, batch) / 24.0, std::log(257.0), 1e-12);
}

TEST(Loss, SingleTokenPairByHand) {
  const auto m = randomized_model<double>(tiny_config(), 11, 0.3);
  Batch b;
  b.batch_size = 1;
  b.seq_len = 1;
  b.inputs = {42};
  b.targets = {7};
  const auto logits = forward_logits(m, b.inputs);
  double mx = -1e300;
  for (double z : logits.row(0)) mx = std::max(mx, z);
  double s = 0.0;
  for (double z : logits.row(0)) s += std::exp(z - mx);
  const double want = std::log(s) + mx - logits.at(0, 7);
  EXPECT_NEAR(loss_on_batch(m, b), want, 1e-12);
}

TEST(Loss, DuplicatedBatchDoublesLoss) {
  const auto m = randomized_model<double>(tiny_config(), 12, 0.3);
  const auto one = sample_batches(testing::random_corpus(100, 3), 1, 1, 8, 2).front();
  Batch two = one;
  two.batch_size = 2;
  two.inputs.insert(two.inputs.end(), one.inputs.begin(), one.inputs.end());
  two.targets.insert(two.targets.end(), one.targets.begin(), one.targets.end());
  EXPECT_EQ(loss_on_batch(m, two), 2.0 * loss_on_batch(m, one));
  EXPECT_EQ(loss_and_gradients(m, two).loss, 2.0 * loss_and_gradients(m, one).loss);
}

TEST(Loss, EmptyBatchIsUsageError) {
  const auto m = init_model<double>(tiny_config());
  EXPECT_THROW(loss_on_batch(m, Batch{}), UsageError);
}

TEST(Loss, TracedAndUntracedAgree) {
  const auto m = randomized_model<double>(tiny_config(), 13, 0.3);
  const auto batch = sample_batches(testing::random_corpus(300, 4), 1, 3, 10, 3).front();
  EXPECT_NEAR(loss_and_gradients(m, batch).loss, loss_on_batch(m, batch), 1e-9);
}

TEST(Checkpoint, RoundtripIsBitwise) {
  auto m = randomized_model<float>(tiny_config(), 14, 0.2);
  ActiveMask mask = m.mask();
  mask.set({0, SublayerKind::kFfn}, false);
  m = m.with_mask(mask);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(m, path);
  const auto bytes = read_file_bytes(path);
  const auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.config(), m.config());
  EXPECT_EQ(loaded.mask(), m.mask());
  EXPECT_EQ(loaded.weights().params(), m.weights().params());
  EXPECT_EQ(encode_checkpoint(loaded), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(init_model<float>(tiny_config()));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SDFP");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);     // vocab 257 = 0x0101, little-endian
  EXPECT_EQ(bytes[9], 1);
  EXPECT_EQ(bytes[36], 0x0f);  // 2 layers, both sublayers on
  const std::size_t params = ParamLayout(tiny_config()).total_elements();
  EXPECT_EQ(bytes.size(), kCheckpointHeaderBytes + 1 + 4 * params);
}

TEST(Checkpoint, CorruptionIsFormatErrorWithOffset) {
  const auto good = encode_checkpoint(init_model<float>(tiny_config()));
  auto bad = good;
  bad[1] ^= 0xff;
  try {
    decode_checkpoint<float>(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  bad = good;
  bad.resize(good.size() - 3);
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  bad = good;
  bad.resize(20);
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  EXPECT_THROW(load_checkpoint<float>(temp_path("does_not_exist.ckpt")), Error);
}

TEST(Checkpoint, LoadedMaskIsHonored) {
  const auto m = randomized_model<float>(tiny_config(), 15, 0.2);
  ActiveMask mask = m.mask();
  mask.set({1, SublayerKind::kAttention}, false);
  const auto path = temp_path("mask.ckpt");
  save_checkpoint(m.with_mask(mask), path);
  const auto loaded = load_checkpoint<float>(path);
  const auto tokens = random_tokens(6, 9);
  EXPECT_NE(forward_logits(loaded, tokens), forward_logits(m, tokens));
  EXPECT_EQ(forward_logits(loaded, tokens), forward_logits(m.with_mask(mask), tokens));
  std::filesystem::remove(path);
}

TEST(ActiveMask, PackedRoundtrip) {
  ActiveMask mask = ActiveMask::full(5);
  mask.set({2, SublayerKind::kFfn}, false);
  mask.set({4, SublayerKind::kAttention}, false);
  EXPECT_EQ(ActiveMask::from_packed(mask.packed(), 5), mask);
  EXPECT_EQ(mask.count_active(), 8u);
  EXPECT_THROW(mask.set({5, SublayerKind::kFfn}, false), IndexError);
}

}  // namespace
}  // namespace sdfp
