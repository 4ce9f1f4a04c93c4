#include <cmath>

#include <gtest/gtest.h>

#include "sdfp/bench.hpp"
#include "sdfp/fit.hpp"
#include "sdfp/pruner.hpp"
#include "test_support.hpp"

namespace sdfp {
namespace {

using testing::randomized_model;
using testing::random_tokens;

TokenDistribution random_dist(std::size_t m, std::mt19937_64& rng, double sparsity = 0.0) {
  std::vector<double> v(m);
  double s = 0;
  for (auto& x : v) {
    x = uniform01(rng) < sparsity ? 0.0 : -std::log(1.0 - uniform01(rng));  // Dirichlet(1)
    s += x;
  }
  if (s == 0) v[0] = s = 1.0;
  for (auto& x : v) x /= s;
  return TokenDistribution(std::move(v));
}

// Drops the normalization of the residual: rejection mass then lands on the
// raw positive part, which sums to less than one. Fed through unchecked.
TokenDistribution broken_residual(const TokenDistribution& p, const TokenDistribution& q) {
  std::vector<double> r(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) r[i] = std::max(0.0, p[i] - q[i]);
  return TokenDistribution::unchecked(std::move(r));
}

// The residual the other way round: max(0, q - p).
TokenDistribution swapped_residual(const TokenDistribution& p, const TokenDistribution& q) {
  return residual_distribution(q, p);
}

TEST(InducedLaw, EqualsTargetOnRandomPairs) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 2 + i % 15;
    const auto p = random_dist(m, rng, i % 3 == 0 ? 0.3 : 0.0);
    const auto q = random_dist(m, rng, i % 5 == 0 ? 0.3 : 0.0);
    const auto law = induced_first_token_law(p, q);
    for (std::size_t y = 0; y < m; ++y) ASSERT_NEAR(law[y], p[y], 1e-12) << i;
  }
}

TEST(InducedLaw, DetectsAWrongResidual) {
  std::mt19937_64 rng(7);
  const auto p = random_dist(8, rng);
  const auto q = random_dist(8, rng);
  double worst = 0;
  for (const auto& fn : {ResidualFn(swapped_residual)}) {
    const auto law = induced_first_token_law(p, q, fn);
    for (std::size_t y = 0; y < 8; ++y) worst = std::max(worst, std::abs(law[y] - p[y]));
  }
  EXPECT_GT(worst, 1e-3);
}

TEST(LosslessTest, CanonicalResidualPasses) {
  std::mt19937_64 rng(3);
  const auto p = random_dist(6, rng);
  const auto q = random_dist(6, rng);
  LosslessOptions o;
  o.n_samples = 50000;
  o.seed = 1;
  const auto r = lossless_test(p, q, o);
  EXPECT_LT(r.exact_max_deviation, 1e-12);
  EXPECT_LT(r.tv, 0.02);
  EXPECT_GT(r.p_value, 0.001);
  EXPECT_EQ(r.dof, 5u);
  EXPECT_TRUE(r.warnings.empty());
  std::size_t total = 0;
  for (auto c : r.spec_counts) total += c;
  EXPECT_EQ(total, 50000u);
}

TEST(LosslessTest, BrokenResidualIsCaught) {
  // Large draft-target gap so rejections are frequent.
  const auto p = TokenDistribution({0.6, 0.2, 0.1, 0.1});
  const auto q = TokenDistribution({0.1, 0.1, 0.2, 0.6});
  LosslessOptions o;
  o.n_samples = 20000;
  o.residual = swapped_residual;
  const auto r = lossless_test(p, q, o);
  EXPECT_GT(r.exact_max_deviation, 0.1);
  EXPECT_GT(r.tv, 0.1);
  EXPECT_LT(r.p_value, 1e-6);
}

TEST(LosslessTest, UnnormalizedResidualShiftsTheExactLaw) {
  const auto p = TokenDistribution({0.6, 0.2, 0.1, 0.1});
  const auto q = TokenDistribution({0.1, 0.1, 0.2, 0.6});
  const auto law = induced_first_token_law(p, q, broken_residual);
  double mass = 0;
  for (double v : law) mass += v;
  EXPECT_LT(mass, 0.9);  // positive part holds 0.6 of the mass
}

TEST(LosslessTest, WarnsWhenUnderpowered) {
  LosslessOptions o;
  o.n_samples = 50;
  const auto r = lossless_test(TokenDistribution({0.5, 0.25, 0.25}),
                               TokenDistribution({0.25, 0.25, 0.5}), o);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("underpowered"), std::string::npos);
  o.n_samples = 0;
  EXPECT_THROW(lossless_test(TokenDistribution({1.0}), TokenDistribution({1.0}), o), ConfigError);
}

TEST(LosslessTest, ModelOverloadRestrictsToTopTargetTokens) {
  const auto target = randomized_model<double>(testing::tiny_config(), 1, 0.5);
  PruneSet s;
  s.ids = {{1, SublayerKind::kFfn}};
  const auto draft = build_draft(target, s);
  const auto ctx = random_tokens(6, 2);
  LosslessOptions o;
  o.n_samples = 4000;
  o.vocab = 5;
  const auto r = lossless_test(target, draft, ctx, o);
  ASSERT_EQ(r.symbols.size(), 5u);
  const auto logits = forward_logits(target, ctx);
  const auto full = TokenDistribution::from_logits<double>(logits.row(5));
  for (std::size_t i = 0; i + 1 < 5; ++i) EXPECT_GE(full[r.symbols[i]], full[r.symbols[i + 1]]);
  double ps = 0;
  for (double v : r.p) ps += v;
  EXPECT_NEAR(ps, 1.0, 1e-12);
  EXPECT_LT(r.exact_max_deviation, 1e-12);
  o.vocab = 1;
  EXPECT_THROW(lossless_test(target, draft, ctx, o), ConfigError);
}

GenerationResult synthetic_run(const std::vector<std::size_t>& accepted, std::size_t k,
                               std::size_t cut_last) {
  GenerationResult r;
  for (std::size_t a : accepted) {
    SpecRound round;
    round.proposed.assign(k, 0);
    round.accepted = a;
    for (std::size_t i = 0; i < std::min(k, a + 1); ++i) round.alpha.push_back(i < a ? 1.0 : 0.0);
    round.committed.assign(a + 1, 1);
    r.rounds.push_back(round);
  }
  r.rounds.back().truncated = cut_last;
  r.rounds.back().committed.resize(r.rounds.back().committed.size() - cut_last);
  for (const auto& round : r.rounds)
    r.tokens.insert(r.tokens.end(), round.committed.begin(), round.committed.end());
  r.target_forwards = r.rounds.size() + 1;
  return r;
}

TEST(Accounting, SyntheticRounds) {
  // Accepted (4, 2, 0) with k = 4: 5 + 3 + 1 = 9 committed tokens.
  const auto run = synthetic_run({4, 2, 0}, 4, 0);
  EXPECT_EQ(run.tokens.size(), 9u);
  const auto a = check_accounting({run}, 4);
  EXPECT_TRUE(a.ok());
  EXPECT_EQ(a.accepted_plus_one, 9u);
  const auto m = summarize_runs({run});
  EXPECT_DOUBLE_EQ(m.block_efficiency, 3.0);
  EXPECT_DOUBLE_EQ(m.alpha_tok, 6.0 / 12.0);
  EXPECT_DOUBLE_EQ(m.mean_accepted, 2.0);

  const auto cut = synthetic_run({4, 2, 3}, 4, 2);
  EXPECT_TRUE(check_accounting({cut, run}, 4).ok());
  EXPECT_EQ(check_accounting({cut}, 4).truncation, 2u);

  auto wrong_forwards = run;
  wrong_forwards.target_forwards += 1;
  EXPECT_FALSE(check_accounting({wrong_forwards}, 4).forwards_reconcile);
  auto lost_token = run;
  lost_token.tokens.pop_back();
  EXPECT_FALSE(check_accounting({lost_token}, 4).tokens_reconcile);
  auto bad_alpha = run;
  bad_alpha.rounds[0].alpha[0] = 1.5;
  EXPECT_FALSE(check_accounting({bad_alpha}, 4).alpha_in_range);
  // Block efficiency 5 cannot happen with k = 2.
  EXPECT_FALSE(check_accounting({synthetic_run({4, 4}, 4, 0)}, 2).block_in_range);
}

TEST(Bench, SelfDraftAndAccounting) {
  ModelConfig c = testing::tiny_config(2);
  c.max_context = 64;
  const auto target = randomized_model<float>(c, 4, 0.4);
  std::vector<std::vector<Token>> prompts{random_tokens(4, 1), random_tokens(7, 2)};
  GenerationParams g;
  g.k = 4;
  g.max_len = 30;
  g.eos_token = 9999;
  const auto self = bench(target, target, prompts, g, 1, 1.0);
  EXPECT_EQ(self.spec.block_efficiency, 5.0);
  EXPECT_DOUBLE_EQ(self.expected_speedup, 1.0);
  EXPECT_TRUE(self.outputs_identical);
  EXPECT_TRUE(self.spec_accounting.ok());
  EXPECT_TRUE(self.vanilla_accounting.ok());
  EXPECT_EQ(self.spec.tokens, 60u);
  EXPECT_EQ(self.vanilla.target_forwards, 60u);
  EXPECT_EQ(self.spec_seconds.size(), 1u);

  PruneSet s;
  s.ids = {{0, SublayerKind::kFfn}, {1, SublayerKind::kAttention}};
  const auto draft = build_draft(target, s);
  const auto r = bench(target, draft, prompts, g, 3, draft_cost_model(c, s));
  EXPECT_TRUE(r.outputs_identical);
  EXPECT_TRUE(r.spec_accounting.ok());
  EXPECT_GE(r.spec.block_efficiency, 1.0);
  EXPECT_LE(r.spec.block_efficiency, 5.0);
  EXPECT_EQ(r.vanilla_seconds.size(), 3u);
  EXPECT_GT(r.speedup, 0.0);
}

TEST(Bench, Errors) {
  ModelConfig c = testing::tiny_config(2);
  const auto m = randomized_model<float>(c, 5, 0.3);
  GenerationParams g;
  EXPECT_THROW(bench(m, m, {}, g, 1, 1.0), UsageError);
  EXPECT_THROW(bench(m, m, {random_tokens(3, 1)}, g, 0, 1.0), ConfigError);
  // A prompt that fills the context leaves no room for any token.
  EXPECT_THROW(bench(m, m, {random_tokens(c.max_context, 1)}, g, 1, 1.0), BenchError);
}

Corpus repeating_corpus(std::size_t n) {
  Corpus c;
  c.name = "cyc";
  for (std::size_t i = 0; i < n; ++i) c.tokens.push_back(static_cast<Token>(97 + (i * 7) % 13));
  return c;
}

TEST(OrderingStudy, ZeroRatioGivesZeroDeltas) {
  const auto m = randomized_model<double>(testing::tiny_config(3), 6, 0.3);
  const auto corpus = repeating_corpus(400);
  const auto batches = sample_batches(corpus, 2, 1, 12, 1);
  const auto fit = accumulate_fit(m, std::span<const Batch>(batches), FitOptions{});
  StudyOptions o;
  o.ratio = 0.0;
  o.seeds = {1, 2};
  o.batches_per_seed = 1;
  o.seq_len = 12;
  o.random_sets = 3;
  const auto r = prune_ordering_study(m, fit, corpus, o);
  EXPECT_EQ(r.pruned_count, 0u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.bottom_delta, 0.0);
    EXPECT_EQ(row.top_delta, 0.0);
    EXPECT_EQ(row.random_delta, 0.0);
    EXPECT_GT(row.base_loss, 0.0);
  }
  EXPECT_TRUE(r.bottom_not_worse);
}

TEST(OrderingStudy, SetsComeFromTheRanking) {
  const auto m = randomized_model<double>(testing::tiny_config(4), 7, 0.3);
  const auto corpus = repeating_corpus(400);
  const auto batches = sample_batches(corpus, 2, 1, 12, 1);
  const auto fit = accumulate_fit(m, std::span<const Batch>(batches), FitOptions{});
  StudyOptions o;
  o.ratio = 0.25;
  o.seeds = {3};
  o.batches_per_seed = 1;
  o.seq_len = 12;
  o.random_sets = 5;
  const auto r = prune_ordering_study(m, fit, corpus, o);
  ASSERT_EQ(r.pruned_count, 2u);
  auto ranked = rank_sublayers(fit);
  std::vector<SublayerId> bottom(ranked.begin(), ranked.begin() + 2);
  std::vector<SublayerId> top(ranked.end() - 2, ranked.end());
  std::sort(bottom.begin(), bottom.end());
  std::sort(top.begin(), top.end());
  EXPECT_EQ(r.bottom, bottom);
  EXPECT_EQ(r.top, top);
  ASSERT_EQ(r.random_sets.size(), 5u);
  for (const auto& set : r.random_sets) {
    EXPECT_EQ(set.size(), 2u);
    EXPECT_TRUE(std::is_sorted(set.begin(), set.end()));
    EXPECT_NE(set[0], set[1]);
  }
  // Deterministic given the seeds.
  const auto again = prune_ordering_study(m, fit, corpus, o);
  EXPECT_EQ(again.random_sets, r.random_sets);
  EXPECT_EQ(again.rows[0].random_delta, r.rows[0].random_delta);
  EXPECT_EQ(r.bottom_not_worse, r.mean_bottom <= r.mean_top);

  o.ratio = 1.0;
  EXPECT_THROW(prune_ordering_study(m, fit, corpus, o), ConfigError);
}

}  // namespace
}  // namespace sdfp
