#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdfp/corpus.hpp"
#include "sdfp/fit.hpp"
#include "sdfp/specdec.hpp"

namespace sdfp {

inline constexpr const char* kPublishedSpeedupNote =
    "The published 1.32x-1.50x overall speedups were measured on 13B-70B parameter "
    "models. They are full-scale results that this desk-scale toy model can neither "
    "reproduce nor target; only the measured numbers in this report apply here.";

struct RunMetrics {
  std::size_t prompts = 0;
  std::size_t tokens = 0;
  std::size_t rounds = 0;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t truncated = 0;
  std::size_t target_forwards = 0;
  std::size_t draft_forwards = 0;
  double wall_seconds = 0.0;
  double tokens_per_second = 0.0;
  double alpha_tok = 0.0;         // accepted / proposed
  double mean_accepted = 0.0;     // per round
  double block_efficiency = 0.0;  // mean of accepted + 1 per round
};

// Aggregates round logs; wall_seconds and tokens_per_second are left zero.
RunMetrics summarize_runs(const std::vector<GenerationResult>& runs);

// The exact integer identities every decoding run must satisfy.
struct AccountingCheck {
  std::size_t committed = 0;
  std::size_t accepted_plus_one = 0;
  std::size_t truncation = 0;
  std::size_t rounds = 0;
  std::size_t target_forwards = 0;
  std::size_t prefills = 0;
  bool tokens_reconcile = false;    // committed == sum(accepted + 1) - truncation
  bool forwards_reconcile = false;  // target forwards == rounds + prefills
  bool alpha_in_range = false;      // every alpha_i and alpha_tok in [0, 1]
  bool block_in_range = false;      // block efficiency in [1, k + 1]
  bool ok() const {
    return tokens_reconcile && forwards_reconcile && alpha_in_range && block_in_range;
  }
};
AccountingCheck check_accounting(const std::vector<GenerationResult>& runs, std::size_t k);

struct BenchResult {
  GenerationParams params;
  std::size_t repeats = 0;
  RunMetrics spec;
  RunMetrics vanilla;
  double speedup = 0.0;  // spec tokens/s over vanilla tokens/s
  double draft_cost = 0.0;
  double expected_speedup = 0.0;  // block_efficiency / (k * draft_cost + 1)
  bool outputs_identical = false;
  AccountingCheck spec_accounting;
  AccountingCheck vanilla_accounting;
  std::vector<double> spec_seconds;  // per timed repeat
  std::vector<double> vanilla_seconds;
  std::vector<GenerationResult> spec_runs;  // one per prompt
  std::vector<GenerationResult> vanilla_runs;
};

// One untimed warmup, then `repeats` timed passes over all prompts for each
// path (interleaved); reports the median wall time. Output determinism is
// checked across repeats.
template <class T>
BenchResult bench(const Model<T>& target, const Model<T>& draft,
                  const std::vector<std::vector<Token>>& prompts,
                  const GenerationParams& params, std::size_t repeats,
                  double draft_cost);

struct LosslessOptions {
  std::size_t n_samples = 200000;
  std::size_t vocab = 16;  // restricted to the top-m target tokens
  std::uint64_t seed = 0;
  double temperature = 1.0;
  ResidualFn residual = residual_distribution;
};

struct LosslessResult {
  std::vector<Token> symbols;  // restricted vocabulary (model token ids)
  std::vector<double> p, q;    // renormalized over the symbols
  std::vector<double> induced;  // exact law of the first committed token
  double exact_max_deviation = 0.0;
  std::size_t n_samples = 0;
  std::vector<std::size_t> spec_counts, vanilla_counts;
  double tv = 0.0;
  double chi_square = 0.0;
  std::size_t dof = 0;
  double p_value = 0.0;
  std::vector<std::string> warnings;
};

// Exact law of the first committed token of one speculative step, by
// enumerating (proposal, accept, residual draw) outcomes.
std::vector<double> induced_first_token_law(const TokenDistribution& p,
                                            const TokenDistribution& q,
                                            const ResidualFn& residual = residual_distribution);

// Core test on explicit distributions over a small vocabulary.
LosslessResult lossless_test(const TokenDistribution& p, const TokenDistribution& q,
                             const LosslessOptions& options);

// Restricts target and draft next-token distributions at `context` to the
// top-m target tokens and runs the core test.
template <class T>
LosslessResult lossless_test(const Model<T>& target, const Model<T>& draft,
                             std::span<const Token> context, const LosslessOptions& options);

struct StudyOptions {
  double ratio = 0.25;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t batches_per_seed = 4;
  std::size_t batch_size = 1;
  std::size_t seq_len = 256;
  std::size_t random_sets = 20;
  std::uint64_t random_seed = 7;
};

struct StudyRow {
  std::uint64_t seed = 0;
  double base_loss = 0.0;  // per token
  double bottom_delta = 0.0;
  double top_delta = 0.0;
  double random_delta = 0.0;  // mean over the random sets
};

struct StudyResult {
  std::size_t pruned_count = 0;
  std::vector<SublayerId> bottom, top;
  std::vector<std::vector<SublayerId>> random_sets;
  std::vector<StudyRow> rows;
  double mean_bottom = 0.0, mean_top = 0.0, mean_random = 0.0;
  bool bottom_not_worse = false;  // mean_bottom <= mean_top
  bool random_between = false;    // mean_bottom <= mean_random <= mean_top
};

// Held-out loss increase from pruning the lowest-FIT, highest-FIT and random
// sublayer sets of the same size, across both sublayer kinds.
template <class T>
StudyResult prune_ordering_study(const Model<T>& target, const FitTable& fit,
                                 const Corpus& heldout, const StudyOptions& options);

}  // namespace sdfp
