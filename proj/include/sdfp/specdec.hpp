#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdfp/sampling.hpp"
#include "sdfp/transformer.hpp"

namespace sdfp {

enum class DecodeMode { kGreedy, kSample };

const char* to_string(DecodeMode mode);
DecodeMode decode_mode_from_string(const std::string& s);

struct GenerationParams {
  std::size_t k = 4;          // draft tokens per round
  std::size_t max_len = 128;  // generated tokens, prompt excluded
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;   // SAMPLE only; applied to target and draft alike
  std::uint64_t seed = 0;
  Token eos_token = kEosToken;

  void validate() const;
};

struct SpecRound {
  std::vector<Token> proposed;
  // One entry per position examined, up to and including the first
  // rejection. GREEDY records 1 for a match and 0 for the mismatch.
  std::vector<double> alpha;
  std::size_t accepted = 0;
  // Accepted prefix plus the correction or bonus token, after any EOS or
  // max_len cut.
  std::vector<Token> committed;
  std::size_t truncated = 0;  // tokens of accepted + 1 dropped by the cut
  // Cache lengths before the verify call and after rollback.
  std::size_t target_cache_before = 0;
  std::size_t target_cache_after = 0;
  std::size_t draft_cache_after = 0;
};

using ResidualFn =
    std::function<TokenDistribution(const TokenDistribution& p, const TokenDistribution& q)>;

// Accept-reject walk over one block. p holds k + 1 target distributions, q and
// proposals hold k draft entries. SAMPLE draws one coin per examined position
// and then one token from the residual (on rejection) or from p_k (bonus).
SpecRound verify_block(std::span<const TokenDistribution> p, std::span<const Token> proposals,
                       std::span<const TokenDistribution> q, DecodeMode mode,
                       std::mt19937_64& rng,
                       const ResidualFn& residual = residual_distribution);

struct GenerationResult {
  std::vector<Token> tokens;  // generated tokens only
  std::vector<SpecRound> rounds;
  std::size_t target_forwards = 0;
  std::size_t draft_forwards = 0;
  bool stopped_at_eos = false;
  // Generation hit max_context before EOS or max_len.
  bool context_truncated = false;

  std::size_t proposed() const;
  std::size_t accepted() const;
  std::size_t truncated() const;
};

// Stage B loop. Both models prefill the prompt once; each round the draft
// proposes up to k tokens with its own cache, the target scores the block in
// one forward call, and both caches are cut back to the committed prefix.
// Randomness (SAMPLE) comes from one generator seeded with params.seed, used
// in the order: proposals, coin flips, residual or bonus draw.
template <class T>
GenerationResult spec_generate(const Model<T>& target, const Model<T>& draft,
                               std::span<const Token> prompt, const GenerationParams& params,
                               const ResidualFn& residual = residual_distribution);

// One target forward per generated token, same sampling rules.
template <class T>
GenerationResult vanilla_generate(const Model<T>& model, std::span<const Token> prompt,
                                  const GenerationParams& params);

}  // namespace sdfp
