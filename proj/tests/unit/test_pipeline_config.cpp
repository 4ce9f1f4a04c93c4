#include <gtest/gtest.h>

#include <json.hpp>

#include "sdfp/pipeline.hpp"
#include "sdfp/report.hpp"
#include "test_support.hpp"

namespace sdfp {
namespace {

std::string field_of(const std::string& text) {
  try {
    parse_pipeline_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(PipelineConfig, EmptyDocumentGivesDefaults) {
  const auto c = parse_pipeline_config("{}");
  EXPECT_EQ(c.model, ModelConfig{});
  EXPECT_EQ(c.decode.k, 4u);
  EXPECT_EQ(c.prune.attn_ratio, 0.5);
  EXPECT_EQ(c.prune.ffn_ratio, 0.35);
  EXPECT_EQ(c.verify.n_samples, 200000u);
  EXPECT_EQ(c.bench.study.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
}

TEST(PipelineConfig, NormalizedJsonRoundTrips) {
  const auto a = parse_pipeline_config(
      R"({"model": {"d_model": 32, "n_heads": 4}, "decode": {"mode": "sample", "temperature": 0.7},
          "fit": {"convention": "per_sample"}, "study": {"seeds": [9, 8]}})");
  EXPECT_EQ(a.decode.mode, DecodeMode::kSample);
  EXPECT_EQ(a.fit.convention, FitConvention::kPerSample);
  const auto text = pipeline_config_json(a);
  const auto b = parse_pipeline_config(text);
  EXPECT_EQ(pipeline_config_json(b), text);
  EXPECT_EQ(b.model.d_model, 32u);
  EXPECT_EQ(b.bench.study.seeds, (std::vector<std::uint64_t>{9, 8}));
}

TEST(PipelineConfig, ErrorsNameTheField) {
  EXPECT_EQ(field_of(R"({"model": {"d_modle": 8}})"), "model.d_modle");
  EXPECT_EQ(field_of(R"({"models": {}})"), "models");
  EXPECT_EQ(field_of(R"({"train": {"lr": "fast"}})"), "train.lr");
  EXPECT_EQ(field_of(R"({"decode": {"k": -1}})"), "decode.k");
  EXPECT_EQ(field_of(R"({"decode": {"k": 0}})"), "decode.k");
  EXPECT_EQ(field_of(R"({"decode": {"mode": "beam"}})"), "decode.mode");
  EXPECT_EQ(field_of(R"({"fit": {"convention": "x"}})"), "fit.convention");
  EXPECT_EQ(field_of(R"({"prune": {"attn_ratio": 1.0}})"), "prune.attn_ratio");
  EXPECT_EQ(field_of(R"({"model": {"n_heads": 3}})"), "model.n_heads");
  EXPECT_EQ(field_of(R"({"train": {"seq_len": 1000}})"), "train.seq_len");
  EXPECT_EQ(field_of(R"({"study": {"seeds": []}})"), "study.seeds");
  EXPECT_EQ(field_of(R"({"study": {"seeds": [1, "a"]}})"), "study.seeds");
  EXPECT_EQ(field_of(R"({"verify": {"vocab": 1}})"), "verify.vocab");
  EXPECT_EQ(field_of(R"({"bench": 3})"), "bench");
  EXPECT_EQ(field_of("[]"), "config");
  EXPECT_THROW(parse_pipeline_config("{\"model\": "), FormatError);
}

TEST(PipelineConfig, ShippedConfigsAreValid) {
  for (const char* name : {"default.json", "tiny.json"}) {
    const auto path = std::filesystem::path(SDFP_SOURCE_DIR) / "configs" / name;
    const auto c = load_pipeline_config(path);
    EXPECT_TRUE(std::filesystem::exists(c.resolve(c.data.corpus))) << name;
  }
  EXPECT_THROW(load_pipeline_config("/nonexistent/config.json"), ConfigError);
}

TEST(SamplePrompts, DeterministicCorpusWindows) {
  const auto corpus = testing::random_corpus(500, 4);
  const auto a = sample_prompts(corpus, 10, 16, 3);
  EXPECT_EQ(a, sample_prompts(corpus, 10, 16, 3));
  EXPECT_NE(a, sample_prompts(corpus, 10, 16, 4));
  EXPECT_NE(a, sample_contexts(corpus, 10, 16, 3));
  for (const auto& p : a) {
    ASSERT_EQ(p.size(), 16u);
    const auto at = std::search(corpus.tokens.begin(), corpus.tokens.end(), p.begin(), p.end());
    EXPECT_NE(at, corpus.tokens.end());
  }
  EXPECT_THROW(sample_prompts(corpus, 1, 501, 3), UsageError);
}

TEST(Report, PruneSetRoundTrip) {
  PruneSet s;
  s.attn_ratio = 0.5;
  s.ffn_ratio = 0.35;
  s.fit_fingerprint = 0x0123456789abcdefull;
  s.ids = {{1, SublayerKind::kAttention}, {1, SublayerKind::kFfn}, {6, SublayerKind::kAttention}};
  const auto j = prune_set_json(s);
  EXPECT_EQ(j["fit_fingerprint"], "0123456789abcdef");
  EXPECT_EQ(j["pruned"], nlohmann::json::parse(R"(["L1.attn", "L1.ffn", "L6.attn"])"));
  const auto back = parse_prune_set(j);
  EXPECT_EQ(back.ids, s.ids);
  EXPECT_EQ(back.fit_fingerprint, s.fit_fingerprint);

  auto bad = j;
  bad["pruned"] = {"L1.mlp"};
  EXPECT_THROW(parse_prune_set(bad), ConfigError);
  bad["pruned"] = {"attn"};
  EXPECT_THROW(parse_prune_set(bad), ConfigError);
  EXPECT_THROW(parse_prune_set(nlohmann::json::object()), ConfigError);
}

TEST(Report, TokensToTextAndJsonDump) {
  const std::vector<Token> t{104, 105, kEosToken};
  EXPECT_EQ(tokens_to_text(t), "hi<eos>");
  EXPECT_EQ(dump_json(nlohmann::json{{"a", 1}}), "{\n  \"a\": 1\n}\n");
  // Invalid UTF-8 from raw bytes must not throw.
  EXPECT_NO_THROW(dump_json(nlohmann::json{{"s", std::string("\xff\xfe")}}));
}

}  // namespace
}  // namespace sdfp
