#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sdfp/fit.hpp"
#include "test_support.hpp"

namespace sdfp {
namespace {

using testing::randomized_model;
using testing::tiny_config;

constexpr SublayerId A(std::uint32_t l) { return {l, SublayerKind::kAttention}; }
constexpr SublayerId F(std::uint32_t l) { return {l, SublayerKind::kFfn}; }

FitTable table(std::initializer_list<std::pair<SublayerId, double>> entries) {
  FitTable t;
  for (const auto& [id, v] : entries) t.scores[id] = v;
  t.normalizer = 1;
  return t;
}

std::vector<Batch> calibration(std::size_t n, std::size_t bs, std::size_t seq, std::uint64_t seed) {
  return sample_batches(testing::random_corpus(2000, seed), n, bs, seq, seed + 1);
}

// Squared gradient norm of one sublayer for one batch, straight from the tape.
double sublayer_norm(const Model<double>& m, const Batch& b, SublayerId id, double scale = 1.0) {
  const auto lg = loss_and_gradients(m, b, scale);
  const auto ids = m.weights().layout().sublayer_params(id);
  double s = 0.0;
  for (ParamId p : ids)
    for (double v : lg.grads.at(p).data()) s += v * v;
  return s;
}

TEST(GradientRecord, SquaredNormArithmetic) {
  GradientRecord<double> g;
  g.set(0, Tensor<double>::matrix({{3, 4}}));
  g.set(1, Tensor<double>::matrix({{1, 1}}));
  const ParamId only[] = {0};
  EXPECT_EQ(g.squared_norm(only), 25.0);
  const ParamId both[] = {0, 1};
  EXPECT_EQ(g.squared_norm(both), 27.0);
}

TEST(AccumulateFit, MinibatchMatchesPerBatchOracle) {
  const auto m = randomized_model<double>(tiny_config(), 1, 0.2);
  const auto batches = calibration(3, 2, 6, 1);
  const FitTable fit = accumulate_fit(m, std::span<const Batch>(batches));
  EXPECT_EQ(fit.normalizer, 3u);
  EXPECT_EQ(fit.scores.size(), 4u);
  for (const auto& [id, t] : fit.scores) {
    double want = 0.0;
    for (const auto& b : batches) want += sublayer_norm(m, b, id);
    EXPECT_NEAR(t, want / 3.0, 1e-12 * want) << id.str();
    EXPECT_GE(t, 0.0);
  }
}

TEST(AccumulateFit, PerSampleMatchesPerSequenceOracle) {
  const auto m = randomized_model<double>(tiny_config(), 2, 0.2);
  const auto batches = calibration(2, 3, 6, 2);
  FitOptions opt;
  opt.convention = FitConvention::kPerSample;
  const FitTable per = accumulate_fit(m, std::span<const Batch>(batches), opt);
  const FitTable mini = accumulate_fit(m, std::span<const Batch>(batches));
  EXPECT_EQ(per.normalizer, 6u);
  bool conventions_differ = false;
  for (const auto& [id, t] : per.scores) {
    double want = 0.0;
    for (const auto& b : batches)
      for (std::size_t r = 0; r < b.batch_size; ++r) want += sublayer_norm(m, b.row_batch(r), id);
    EXPECT_NEAR(t, want / 6.0, 1e-12 * want) << id.str();
    conventions_differ |= std::abs(mini.score(id) - t) > 1e-9 * t;
  }
  // The minibatch form carries cross-sequence inner products.
  EXPECT_TRUE(conventions_differ);
}

TEST(AccumulateFit, LossScaleMultipliesByItsSquare) {
  const auto m = randomized_model<double>(tiny_config(), 3, 0.2);
  const auto batches = calibration(2, 2, 6, 3);
  FitOptions opt;
  opt.loss_scale = 2.0;
  const auto base = accumulate_fit(m, std::span<const Batch>(batches));
  const auto scaled = accumulate_fit(m, std::span<const Batch>(batches), opt);
  for (const auto& [id, t] : base.scores) EXPECT_NEAR(scaled.score(id), 4.0 * t, 1e-12 * t);
  EXPECT_EQ(rank_sublayers(base), rank_sublayers(scaled));
}

TEST(AccumulateFit, BatchOrderAndThreadCountDoNotMatter) {
  const auto m = randomized_model<double>(tiny_config(3), 4, 0.2);
  auto batches = calibration(6, 2, 6, 4);
  const auto base = accumulate_fit(m, std::span<const Batch>(batches));
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(batches.begin(), batches.end(), rng);
    EXPECT_EQ(accumulate_fit(m, std::span<const Batch>(batches)).scores, base.scores);
  }
  FitOptions threaded;
  threaded.threads = 4;
  EXPECT_EQ(accumulate_fit(m, std::span<const Batch>(batches), threaded).scores, base.scores);
}

TEST(AccumulateFit, OnlyActiveSublayersAreScored) {
  auto m = randomized_model<double>(tiny_config(), 5, 0.2);
  ActiveMask mask = m.mask();
  mask.set(A(1), false);
  const auto batches = calibration(1, 1, 6, 5);
  const auto fit = accumulate_fit(m.with_mask(mask), std::span<const Batch>(batches));
  EXPECT_EQ(fit.scores.size(), 3u);
  EXPECT_THROW(fit.score(A(1)), IndexError);
}

TEST(AccumulateFit, NonFiniteGradientNamesTheSublayer) {
  const auto m = randomized_model<double>(tiny_config(), 6, 0.2);
  const auto batches = calibration(1, 1, 6, 6);
  FitOptions opt;
  opt.loss_scale = 1e300;
  try {
    accumulate_fit(m, std::span<const Batch>(batches), opt);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sublayer L"), std::string::npos) << e.what();
  }
  EXPECT_THROW(accumulate_fit(m, std::span<const Batch>()), UsageError);
}

TEST(RankSublayers, AscendingWithTieRule) {
  EXPECT_EQ(rank_sublayers(table({{A(0), 5}, {A(1), 1}, {A(2), 3}, {A(3), 2}})),
            (std::vector<SublayerId>{A(1), A(3), A(2), A(0)}));
  EXPECT_EQ(rank_sublayers(table({{A(0), 1}, {F(0), 1}, {A(1), 1}, {F(1), 1}})),
            (std::vector<SublayerId>{F(1), A(1), F(0), A(0)}));
  EXPECT_EQ(rank_sublayers(table({{F(2), 0.5}})), (std::vector<SublayerId>{F(2)}));
  EXPECT_THROW(rank_sublayers(FitTable{}), UsageError);
}

TEST(SelectPruneSet, WorkedExample) {
  const auto fit = table({{A(0), 5}, {A(1), 1}, {A(2), 3}, {A(3), 2},
                          {F(0), 4}, {F(1), 6}, {F(2), 2}, {F(3), 8}});
  const auto set = select_prune_set(fit, 0.5, 0.25);
  EXPECT_EQ(set.ids, (std::vector<SublayerId>{A(1), F(2), A(3)}));
  EXPECT_EQ(set.fit_fingerprint, fit.fingerprint());
  EXPECT_TRUE(select_prune_set(fit, 0.0, 0.0).ids.empty());
}

TEST(SelectPruneSet, RatioBounds) {
  const auto fit = table({{A(0), 5}, {F(0), 4}});
  try {
    select_prune_set(fit, 1.0, 0.0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "attn_ratio");
  }
  EXPECT_THROW(select_prune_set(fit, 0.0, -0.1), ConfigError);
  EXPECT_THROW(select_prune_set(fit, 0.0, std::nan("")), ConfigError);
}

TEST(SelectPruneSet, CountsOnDefaultDepth) {
  FitTable fit;
  std::mt19937_64 rng(1);
  for (std::uint32_t l = 0; l < 8; ++l) {
    fit.scores[A(l)] = double(rng() % 1000);
    fit.scores[F(l)] = double(rng() % 1000);
  }
  const auto half = select_prune_set(fit, 0.5, 0.5);
  EXPECT_EQ(half.count(SublayerKind::kAttention), 4u);
  EXPECT_EQ(half.count(SublayerKind::kFfn), 4u);
  const auto defaults = select_prune_set(fit, 0.5, 0.35);
  EXPECT_EQ(defaults.count(SublayerKind::kAttention), 4u);
  EXPECT_EQ(defaults.count(SublayerKind::kFfn), 2u);  // floor(2.8)
}

TEST(SelectPruneSet, DependsOnlyOnRanks) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-6, 1e3);
  for (int trial = 0; trial < 50; ++trial) {
    FitTable fit;
    for (std::uint32_t l = 0; l < 8; ++l) {
      fit.scores[A(l)] = u(rng);
      fit.scores[F(l)] = u(rng);
    }
    FitTable transformed = fit;
    for (auto& [id, v] : transformed.scores) v = std::log1p(std::sqrt(v)) * 7.0 + 3.0;
    EXPECT_EQ(select_prune_set(fit, 0.5, 0.35).ids, select_prune_set(transformed, 0.5, 0.35).ids);
    EXPECT_EQ(rank_sublayers(fit), rank_sublayers(transformed));
  }
}

TEST(FitReport, LogColumnAndRoundtrip) {
  FitTable fit = table({{A(0), 100.0}, {F(0), 0.0}, {A(1), 0.123456789012345}});
  fit.corpus = "c";
  fit.seed = 3;
  fit.n_batches = 2;
  fit.normalizer = 2;
  const std::string text = fit_report_json(fit);
  const auto doc = nlohmann::json::parse(text);
  const auto& rows = doc.at("sublayers");
  EXPECT_EQ(rows[0].at("id"), "L0.ffn");
  EXPECT_EQ(rows[0].at("log10_fit"), "-inf");
  EXPECT_EQ(rows[2].at("id"), "L0.attn");
  EXPECT_DOUBLE_EQ(rows[2].at("log10_fit").get<double>(), 2.0);
  const FitTable back = parse_fit_report(text);
  EXPECT_EQ(back.scores, fit.scores);
  EXPECT_EQ(back.fingerprint(), fit.fingerprint());
  EXPECT_EQ(back.corpus, "c");
  EXPECT_EQ(fit_report_json(back), text);

  const std::string table_text = fit_report_text(fit);
  EXPECT_NE(table_text.find("-inf"), std::string::npos);
  EXPECT_NE(table_text.find("2.000000"), std::string::npos);
}

TEST(FitReport, MalformedInput) {
  EXPECT_THROW(parse_fit_report("{not json"), FormatError);
  EXPECT_THROW(parse_fit_report("{}"), ConfigError);
  EXPECT_THROW(parse_fit_report(R"({"convention":"minibatch","normalizer":1,"n_batches":1,
      "batch_size":1,"seq_len":1,"corpus":"","seed":0,"loss_scale":1,
      "sublayers":[{"layer":0,"kind":"attention","fit":-1}]})"),
               ConfigError);
}

TEST(KlCheck, ZeroDirectionOnUnusedParameter) {
  auto m = randomized_model<double>(tiny_config(), 7, 0.3);
  ActiveMask mask = m.mask();
  mask.set(F(1), false);
  m = m.with_mask(mask);
  std::vector<Tensor<double>> dir;
  for (const auto& p : m.weights().params()) dir.push_back(Tensor<double>::zeros(p.shape()));
  const ParamId unused = m.weights().layout().sublayer_param(F(1), ParamLayout::kWIn);
  dir[unused].mutable_data()[0] = 1.0;
  const std::vector<std::vector<Token>> ctx{testing::random_tokens(5, 1)};
  const auto r = kl_quadratic_check(m, ctx, dir, 1e-3);
  EXPECT_EQ(r.measured_kl, 0.0);
  EXPECT_EQ(r.predicted_kl, 0.0);
}

TEST(KlCheck, EpsilonZeroIsUsageError) {
  const auto m = randomized_model<double>(tiny_config(), 8, 0.3);
  std::mt19937_64 rng(1);
  EXPECT_THROW(kl_quadratic_check(m, 0.0, rng), UsageError);
}

TEST(KlCheck, QuadraticRegime) {
  const auto m = randomized_model<double>(tiny_config(), 9, 0.3);
  std::mt19937_64 rng(2);
  std::vector<std::vector<Token>> ctx{testing::random_tokens(6, 2), testing::random_tokens(4, 3)};
  const auto dir = random_unit_direction(m, rng);
  double prev_gap = 1e9;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const auto r = kl_quadratic_check(m, ctx, dir, eps);
    const double gap = std::abs(r.ratio - 1.0);
    EXPECT_LT(gap, prev_gap) << eps;
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 0.1);
  const auto small = kl_quadratic_check(m, ctx, dir, 1e-3);
  const auto twice = kl_quadratic_check(m, ctx, dir, 2e-3);
  EXPECT_NEAR(twice.measured_kl / small.measured_kl, 4.0, 0.4);
}

TEST(FitConvention, Names) {
  EXPECT_EQ(fit_convention_from_string("per_sample"), FitConvention::kPerSample);
  EXPECT_STREQ(to_string(FitConvention::kMinibatch), "minibatch");
  EXPECT_THROW(fit_convention_from_string("batch"), ConfigError);
}

}  // namespace
}  // namespace sdfp
