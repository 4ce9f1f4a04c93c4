#include "sdfp/specdec.hpp"

#include <algorithm>
#include <optional>

#include "sdfp/errors.hpp"

namespace sdfp {

const char* to_string(DecodeMode mode) {
  return mode == DecodeMode::kGreedy ? "greedy" : "sample";
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "sample") return DecodeMode::kSample;
  throw ConfigError("mode", "expected greedy or sample, got '" + s + "'");
}

void GenerationParams::validate() const {
  if (k < 1) throw ConfigError("k", "speculation depth must be at least 1");
  if (max_len < 1) throw ConfigError("max_len", "must be at least 1");
  if (mode == DecodeMode::kSample && !(temperature > 0.0)) {
    throw ConfigError("temperature", "must be positive in sample mode");
  }
}

std::size_t GenerationResult::proposed() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.proposed.size();
  return n;
}

std::size_t GenerationResult::accepted() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.accepted;
  return n;
}

std::size_t GenerationResult::truncated() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.truncated;
  return n;
}

SpecRound verify_block(std::span<const TokenDistribution> p, std::span<const Token> proposals,
                       std::span<const TokenDistribution> q, DecodeMode mode,
                       std::mt19937_64& rng, const ResidualFn& residual) {
  const std::size_t k = proposals.size();
  if (p.size() != k + 1 || q.size() != k) {
    throw UsageError("verify_block: " + std::to_string(k) + " proposals need " +
                     std::to_string(k + 1) + " target and " + std::to_string(k) +
                     " draft distributions, got " + std::to_string(p.size()) + " and " +
                     std::to_string(q.size()));
  }
  SpecRound round;
  round.proposed.assign(proposals.begin(), proposals.end());
  std::size_t j = 0;
  if (mode == DecodeMode::kGreedy) {
    while (j < k) {
      const bool match = proposals[j] == p[j].argmax();
      round.alpha.push_back(match ? 1.0 : 0.0);
      if (!match) break;
      ++j;
    }
    round.accepted = j;
    round.committed.assign(proposals.begin(), proposals.begin() + j);
    round.committed.push_back(p[j].argmax());
    return round;
  }
  bool rejected = false;
  while (j < k) {
    const double a = acceptance_prob(p[j], q[j], proposals[j]);
    round.alpha.push_back(a);
    if (!(uniform01(rng) < a)) {
      rejected = true;
      break;
    }
    ++j;
  }
  round.accepted = j;
  round.committed.assign(proposals.begin(), proposals.begin() + j);
  round.committed.push_back(rejected ? sample_categorical(residual(p[j], q[j]), rng)
                                     : sample_categorical(p[k], rng));
  return round;
}

namespace {

template <class T>
TokenDistribution row_dist(const Tensor<T>& logits, std::size_t row, const GenerationParams& params) {
  const double temp = params.mode == DecodeMode::kSample ? params.temperature : 1.0;
  return TokenDistribution::from_logits<T>(logits.row(row), temp);
}

Token pick(const TokenDistribution& d, const GenerationParams& params, std::mt19937_64& rng) {
  return params.mode == DecodeMode::kGreedy ? d.argmax() : sample_categorical(d, rng);
}

void check_prompt(const ModelConfig& c, std::span<const Token> prompt) {
  if (prompt.empty()) throw UsageError("prompt must not be empty");
  if (prompt.size() > c.max_context) {
    throw CapacityError("prompt of " + std::to_string(prompt.size()) +
                        " tokens does not fit max_context " + std::to_string(c.max_context));
  }
}

}  // namespace

template <class T>
GenerationResult spec_generate(const Model<T>& target, const Model<T>& draft,
                               std::span<const Token> prompt, const GenerationParams& params,
                               const ResidualFn& residual) {
  params.validate();
  if (!(target.config() == draft.config())) {
    throw UsageError("draft and target must share one architecture");
  }
  const auto& cfg = target.config();
  check_prompt(cfg, prompt);
  std::mt19937_64 rng(params.seed);
  GenerationResult out;

  auto tcache = target.new_cache();
  auto dcache = draft.new_cache();
  const auto tl = forward_logits(target, prompt, &tcache);
  ++out.target_forwards;
  const auto dl = forward_logits(draft, prompt, &dcache);
  ++out.draft_forwards;
  // Next-token distributions after the prompt; later rounds get theirs by
  // feeding the pending (committed but not yet cached) tokens.
  std::optional<TokenDistribution> p_first = row_dist(tl, prompt.size() - 1, params);
  std::optional<TokenDistribution> q_first = row_dist(dl, prompt.size() - 1, params);
  std::vector<Token> target_pending, draft_pending;
  std::size_t ctx_len = prompt.size();

  while (out.tokens.size() < params.max_len) {
    const std::size_t room = cfg.max_context - ctx_len;
    if (room == 0) {
      out.context_truncated = true;
      break;
    }
    const std::size_t k = std::min(params.k, room - 1);

    std::vector<TokenDistribution> q;
    q.reserve(k + 1);
    if (q_first) {
      q.push_back(std::move(*q_first));
      q_first.reset();
    } else {
      const auto logits = forward_logits(draft, draft_pending, &dcache);
      ++out.draft_forwards;
      q.push_back(row_dist(logits, draft_pending.size() - 1, params));
    }
    draft_pending.clear();
    std::vector<Token> proposals;
    for (std::size_t i = 0; i < k; ++i) {
      proposals.push_back(pick(q[i], params, rng));
      if (i + 1 < k) {
        const Token t = proposals.back();
        const auto logits = forward_logits(draft, std::span<const Token>(&t, 1), &dcache);
        ++out.draft_forwards;
        q.push_back(row_dist(logits, 0, params));
      }
    }
    q.resize(k);

    std::vector<Token> feed = target_pending;
    feed.insert(feed.end(), proposals.begin(), proposals.end());
    const std::size_t t_before = tcache.cached_len();
    const auto logits = forward_logits(target, feed, &tcache);
    ++out.target_forwards;
    std::vector<TokenDistribution> p;
    p.reserve(k + 1);
    if (p_first) {
      p.push_back(std::move(*p_first));
      p_first.reset();
    }
    for (std::size_t r = 0; r < feed.size(); ++r) p.push_back(row_dist(logits, r, params));

    SpecRound round = verify_block(p, proposals, q, params.mode, rng, residual);
    const std::size_t j = round.accepted;
    round.target_cache_before = t_before;
    tcache.truncate(ctx_len + j);
    target_pending.assign(1, round.committed.back());
    const std::size_t draft_kept = std::min(j, k == 0 ? 0 : k - 1);
    dcache.truncate(ctx_len + draft_kept);
    draft_pending.assign(proposals.begin() + draft_kept, proposals.begin() + j);
    draft_pending.push_back(round.committed.back());
    round.target_cache_after = tcache.cached_len();
    round.draft_cache_after = dcache.cached_len();

    std::size_t keep = round.committed.size();
    bool stop = false;
    for (std::size_t i = 0; i < keep; ++i) {
      if (round.committed[i] == params.eos_token) {
        keep = i + 1;
        out.stopped_at_eos = true;
        stop = true;
        break;
      }
    }
    const std::size_t budget = params.max_len - out.tokens.size();
    if (keep >= budget) {
      keep = budget;
      stop = true;
    }
    round.truncated = round.committed.size() - keep;
    round.committed.resize(keep);
    out.tokens.insert(out.tokens.end(), round.committed.begin(), round.committed.end());
    ctx_len += keep;
    out.rounds.push_back(std::move(round));
    if (stop) break;
  }
  return out;
}

template <class T>
GenerationResult vanilla_generate(const Model<T>& model, std::span<const Token> prompt,
                                  const GenerationParams& params) {
  params.validate();
  const auto& cfg = model.config();
  check_prompt(cfg, prompt);
  std::mt19937_64 rng(params.seed);
  GenerationResult out;
  auto cache = model.new_cache();
  auto logits = forward_logits(model, prompt, &cache);
  ++out.target_forwards;
  std::size_t ctx_len = prompt.size();
  std::size_t row = prompt.size() - 1;
  while (true) {
    if (ctx_len == cfg.max_context) {
      out.context_truncated = true;
      break;
    }
    const Token t = pick(row_dist(logits, row, params), params, rng);
    out.tokens.push_back(t);
    ++ctx_len;
    if (t == params.eos_token) {
      out.stopped_at_eos = true;
      break;
    }
    if (out.tokens.size() == params.max_len) break;
    if (ctx_len == cfg.max_context) {
      out.context_truncated = true;
      break;
    }
    logits = forward_logits(model, std::span<const Token>(&t, 1), &cache);
    ++out.target_forwards;
    row = 0;
  }
  return out;
}

#define SDFP_INSTANTIATE_DECODE(T)                                                       \
  template GenerationResult spec_generate<T>(const Model<T>&, const Model<T>&,           \
                                             std::span<const Token>,                     \
                                             const GenerationParams&, const ResidualFn&); \
  template GenerationResult vanilla_generate<T>(const Model<T>&, std::span<const Token>, \
                                                const GenerationParams&);

SDFP_INSTANTIATE_DECODE(float)
SDFP_INSTANTIATE_DECODE(double)

#undef SDFP_INSTANTIATE_DECODE

}  // namespace sdfp
