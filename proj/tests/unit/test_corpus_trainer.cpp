#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sdfp/checkpoint.hpp"
#include "sdfp/corpus.hpp"
#include "sdfp/trainer.hpp"
#include "test_support.hpp"

namespace sdfp {
namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("sdfp_corpus_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  std::filesystem::path dir_;
};

TEST_F(TempDir, ByteIdentityTokenization) {
  const auto c = load_corpus(write("ab.txt", "ab"));
  EXPECT_EQ(c.tokens, (std::vector<Token>{97, 98}));
  EXPECT_EQ(c.name, "ab.txt");
  const auto raw = load_corpus(write("raw.bin", std::string("\xff\x00z", 3)));
  EXPECT_EQ(raw.tokens, (std::vector<Token>{255, 0, 122}));
}

TEST_F(TempDir, LoadingTwiceIsIdentical) {
  const auto p = write("doc.txt", "the quick brown fox");
  EXPECT_EQ(load_corpus(p).tokens, load_corpus(p).tokens);
}

TEST_F(TempDir, EmptyOrMissingFileIsIngestionError) {
  EXPECT_THROW(load_corpus(write("empty.txt", "")), IngestionError);
  EXPECT_THROW(load_corpus(dir_ / "missing.txt"), IngestionError);
}

TEST_F(TempDir, ManifestInsertsEosBetweenDocuments) {
  write("a.txt", "ab");
  write("b.txt", "c");
  const auto c = load_corpus_manifest(write("list.txt", "a.txt\n\nb.txt\n"));
  EXPECT_EQ(c.tokens, (std::vector<Token>{97, 98, kEosToken, 99}));
  EXPECT_THROW(load_corpus_manifest(write("none.txt", "\n\n")), IngestionError);
}

TEST(SplitCorpus, DisjointAndComplete) {
  const auto c = testing::random_corpus(1000, 1);
  const auto [train, held] = split_corpus(c, 0.9);
  EXPECT_EQ(train.size(), 900u);
  EXPECT_EQ(held.size(), 100u);
  EXPECT_TRUE(std::equal(held.tokens.begin(), held.tokens.end(), c.tokens.begin() + 900));
  EXPECT_THROW(split_corpus(c, 1.0), UsageError);
}

TEST(SampleBatch, ShiftOffsetsAndDeterminism) {
  Corpus c;
  c.name = "ramp";
  for (Token i = 0; i < 200; ++i) c.tokens.push_back(i);
  Rng r1(5), r2(5);
  const auto a = sample_batch(c, 16, 9, r1);
  const auto b = sample_batch(c, 16, 9, r2);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  for (std::size_t row = 0; row < 16; ++row) {
    const auto in = a.input_row(row);
    const auto tg = a.target_row(row);
    EXPECT_LE(in[0] + 10, 200u);  // window of seq_len + 1 fits
    for (std::size_t t = 0; t < 9; ++t) {
      EXPECT_EQ(tg[t], in[t] + 1);
      if (t + 1 < 9) {
        EXPECT_EQ(in[t + 1], tg[t]);
      }
    }
  }
  Rng r3(1);
  EXPECT_THROW(sample_batch(c, 1, 200, r3), UsageError);
  Rng r4(1);
  EXPECT_NO_THROW(sample_batch(c, 1, 199, r4));
}

TEST(SampleBatch, OffsetsCoverTheValidRange) {
  Corpus c;
  for (Token i = 0; i < 12; ++i) c.tokens.push_back(i);
  Rng rng(3);
  std::vector<int> seen(12, 0);
  for (int i = 0; i < 2000; ++i) seen[sample_batch(c, 1, 3, rng).inputs[0]]++;
  for (int o = 0; o <= 8; ++o) EXPECT_GT(seen[o], 100) << o;
  for (int o = 9; o < 12; ++o) EXPECT_EQ(seen[o], 0) << o;
}

TEST(Train, ZeroStepsLeavesModelUnchanged) {
  const auto m = init_model<float>(testing::tiny_config());
  TrainConfig tc;
  tc.steps = 0;
  tc.seq_len = 8;
  const auto res = train(m, testing::random_corpus(500, 2), tc);
  EXPECT_EQ(encode_checkpoint(res.model), encode_checkpoint(m));
  EXPECT_TRUE(res.loss_curve.empty());
}

TEST(Train, DeterministicAndLearnsARepetitiveCorpus) {
  Corpus c;
  c.name = "pattern";
  const std::string unit = "abcabd abcabd xyz ";
  for (int i = 0; i < 60; ++i)
    for (char ch : unit) c.tokens.push_back(static_cast<unsigned char>(ch));
  ModelConfig mc = testing::tiny_config();
  mc.d_model = 16;
  mc.d_ff = 32;
  mc.max_context = 32;
  TrainConfig tc;
  tc.steps = 150;
  tc.batch_size = 4;
  tc.seq_len = 24;
  tc.warmup_steps = 10;
  const auto a = train(init_model<float>(mc), c, tc);
  const auto b = train(init_model<float>(mc), c, tc);
  EXPECT_EQ(encode_checkpoint(a.model), encode_checkpoint(b.model));
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  ASSERT_EQ(a.loss_curve.size(), 150u);
  const auto smooth = smooth_curve(a.loss_curve, 20);
  EXPECT_LT(smooth.back(), 0.9 * a.loss_curve.front());
}

TEST(Train, DivergenceNamesTheStep) {
  ModelConfig mc = testing::tiny_config();
  TrainConfig tc;
  tc.steps = 50;
  tc.seq_len = 8;
  tc.lr = 1e30;
  tc.grad_clip = 0.0;
  tc.warmup_steps = 0;
  try {
    train(init_model<float>(mc), testing::random_corpus(500, 3), tc);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.step(), 1);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig tc;
  tc.lr = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.seq_len = 1000;
  EXPECT_THROW(train(init_model<float>(testing::tiny_config()), testing::random_corpus(2000, 1), tc),
               ConfigError);
}

TEST(SmoothCurve, TrailingMean) {
  const auto s = smooth_curve({4, 2, 6, 8}, 2);
  EXPECT_EQ(s, (std::vector<double>{4, 3, 4, 7}));
  EXPECT_EQ(loss_curve_csv({1.5, 2}), "step,loss\n0,1.5\n1,2\n");
}

}  // namespace
}  // namespace sdfp
