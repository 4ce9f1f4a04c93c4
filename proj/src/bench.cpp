#include "sdfp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "sdfp/errors.hpp"
#include "sdfp/pruner.hpp"

namespace sdfp {

RunMetrics summarize_runs(const std::vector<GenerationResult>& runs) {
  RunMetrics m;
  m.prompts = runs.size();
  std::size_t accepted_plus_one = 0;
  for (const auto& r : runs) {
    m.tokens += r.tokens.size();
    m.rounds += r.rounds.size();
    m.proposed += r.proposed();
    m.accepted += r.accepted();
    m.truncated += r.truncated();
    m.target_forwards += r.target_forwards;
    m.draft_forwards += r.draft_forwards;
    for (const auto& round : r.rounds) accepted_plus_one += round.accepted + 1;
  }
  m.alpha_tok = m.proposed ? double(m.accepted) / double(m.proposed) : 0.0;
  m.mean_accepted = m.rounds ? double(m.accepted) / double(m.rounds) : 0.0;
  m.block_efficiency = m.rounds ? double(accepted_plus_one) / double(m.rounds) : 0.0;
  return m;
}

AccountingCheck check_accounting(const std::vector<GenerationResult>& runs, std::size_t k) {
  AccountingCheck a;
  a.alpha_in_range = true;
  for (const auto& r : runs) {
    a.committed += r.tokens.size();
    a.rounds += r.rounds.size();
    a.target_forwards += r.target_forwards;
    a.prefills += 1;
    for (const auto& round : r.rounds) {
      a.accepted_plus_one += round.accepted + 1;
      a.truncation += round.truncated;
      for (double al : round.alpha) a.alpha_in_range = a.alpha_in_range && al >= 0.0 && al <= 1.0;
    }
  }
  // A run without rounds is plain decoding: one forward per token except the
  // last, plus the prefill.
  std::size_t expected_forwards = 0;
  std::size_t plain_tokens = 0;
  for (const auto& r : runs) {
    if (r.rounds.empty()) {
      expected_forwards += r.tokens.empty() ? 1 : r.tokens.size();
      plain_tokens += r.tokens.size();
    } else {
      expected_forwards += r.rounds.size() + 1;
    }
  }
  a.tokens_reconcile = a.committed == a.accepted_plus_one - a.truncation + plain_tokens;
  a.forwards_reconcile = a.target_forwards == expected_forwards;
  const auto m = summarize_runs(runs);
  a.alpha_in_range = a.alpha_in_range && m.alpha_tok >= 0.0 && m.alpha_tok <= 1.0;
  a.block_in_range = a.rounds == 0 || (m.block_efficiency >= 1.0 &&
                                       m.block_efficiency <= double(k) + 1.0);
  return a;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_tokens(const std::vector<GenerationResult>& a, const std::vector<GenerationResult>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].tokens != b[i].tokens) return false;
  return true;
}

}  // namespace

template <class T>
BenchResult bench(const Model<T>& target, const Model<T>& draft,
                  const std::vector<std::vector<Token>>& prompts,
                  const GenerationParams& params, std::size_t repeats, double draft_cost) {
  params.validate();
  if (prompts.empty()) throw UsageError("bench needs at least one prompt");
  if (repeats < 1) throw ConfigError("repeats", "must be at least 1");
  using Clock = std::chrono::steady_clock;
  auto run_spec = [&] {
    std::vector<GenerationResult> out;
    for (const auto& p : prompts) out.push_back(spec_generate(target, draft, p, params));
    return out;
  };
  auto run_vanilla = [&] {
    std::vector<GenerationResult> out;
    for (const auto& p : prompts) out.push_back(vanilla_generate(target, p, params));
    return out;
  };

  BenchResult res;
  res.params = params;
  res.repeats = repeats;
  res.spec_runs = run_spec();
  res.vanilla_runs = run_vanilla();
  for (std::size_t r = 0; r < repeats; ++r) {
    auto t0 = Clock::now();
    auto s = run_spec();
    auto t1 = Clock::now();
    auto v = run_vanilla();
    auto t2 = Clock::now();
    if (!same_tokens(s, res.spec_runs) || !same_tokens(v, res.vanilla_runs)) {
      throw BenchError("decoding output changed between repeats");
    }
    res.spec_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    res.vanilla_seconds.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  res.spec = summarize_runs(res.spec_runs);
  res.vanilla = summarize_runs(res.vanilla_runs);
  if (res.spec.tokens == 0 || res.vanilla.tokens == 0) {
    throw BenchError("no tokens generated");
  }
  res.spec.wall_seconds = median(res.spec_seconds);
  res.vanilla.wall_seconds = median(res.vanilla_seconds);
  res.spec.tokens_per_second = double(res.spec.tokens) / res.spec.wall_seconds;
  res.vanilla.tokens_per_second = double(res.vanilla.tokens) / res.vanilla.wall_seconds;
  res.speedup = res.spec.tokens_per_second / res.vanilla.tokens_per_second;
  res.draft_cost = draft_cost;
  res.expected_speedup = res.spec.block_efficiency / (double(params.k) * draft_cost + 1.0);
  res.outputs_identical = same_tokens(res.spec_runs, res.vanilla_runs);
  res.spec_accounting = check_accounting(res.spec_runs, params.k);
  res.vanilla_accounting = check_accounting(res.vanilla_runs, params.k);
  return res;
}

std::vector<double> induced_first_token_law(const TokenDistribution& p,
                                            const TokenDistribution& q,
                                            const ResidualFn& residual) {
  if (p.size() != q.size()) throw DimensionError("p and q have different vocabularies");
  const std::size_t m = p.size();
  std::vector<double> law(m, 0.0);
  double reject = 0.0;
  for (std::size_t x = 0; x < m; ++x) {
    if (q[x] <= 0.0) continue;  // never proposed
    const double a = acceptance_prob(p, q, static_cast<Token>(x));
    law[x] += q[x] * a;
    reject += q[x] * (1.0 - a);
  }
  if (reject > 0.0) {
    const auto r = residual(p, q);
    for (std::size_t y = 0; y < m; ++y) law[y] += reject * r[y];
  }
  return law;
}

LosslessResult lossless_test(const TokenDistribution& p, const TokenDistribution& q,
                             const LosslessOptions& options) {
  const std::size_t m = p.size();
  if (q.size() != m) throw DimensionError("p and q have different vocabularies");
  if (options.n_samples == 0) throw ConfigError("n_samples", "must be positive");
  LosslessResult res;
  res.p = p.probs();
  res.q = q.probs();
  res.n_samples = options.n_samples;
  if (options.n_samples < 10 * m * m) {
    res.warnings.push_back("underpowered: n_samples " + std::to_string(options.n_samples) +
                           " < 10 m^2 = " + std::to_string(10 * m * m));
  }
  res.induced = induced_first_token_law(p, q, options.residual);
  for (std::size_t y = 0; y < m; ++y)
    res.exact_max_deviation = std::max(res.exact_max_deviation, std::abs(res.induced[y] - p[y]));

  res.spec_counts.assign(m, 0);
  res.vanilla_counts.assign(m, 0);
  std::mt19937_64 spec_rng(options.seed);
  std::mt19937_64 van_rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  const TokenDistribution pk[2] = {p, p};
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    const Token x = sample_categorical(q, spec_rng);
    const auto round = verify_block(pk, std::span<const Token>(&x, 1),
                                    std::span<const TokenDistribution>(&q, 1),
                                    DecodeMode::kSample, spec_rng, options.residual);
    ++res.spec_counts[round.committed.front()];
    ++res.vanilla_counts[sample_categorical(p, van_rng)];
  }
  const double n = double(options.n_samples);
  std::size_t cells = 0;
  for (std::size_t y = 0; y < m; ++y) {
    const double a = double(res.spec_counts[y]), b = double(res.vanilla_counts[y]);
    res.tv += 0.5 * std::abs(a - b) / n;
    if (a + b > 0) {
      res.chi_square += (a - b) * (a - b) / (a + b);
      ++cells;
    }
  }
  res.dof = cells > 0 ? cells - 1 : 0;
  res.p_value = res.dof == 0 ? 1.0
                             : boost::math::gamma_q(0.5 * double(res.dof), 0.5 * res.chi_square);
  return res;
}

template <class T>
LosslessResult lossless_test(const Model<T>& target, const Model<T>& draft,
                             std::span<const Token> context, const LosslessOptions& options) {
  if (context.empty()) throw UsageError("lossless_test needs a non-empty context");
  const std::size_t vocab = target.config().vocab_size;
  if (options.vocab < 2 || options.vocab > vocab) {
    throw ConfigError("vocab", "restricted vocabulary must have 2.." + std::to_string(vocab) +
                                   " symbols");
  }
  const auto tl = forward_logits(target, context);
  const auto dl = forward_logits(draft, context);
  const auto pf = TokenDistribution::from_logits<T>(tl.row(context.size() - 1), options.temperature);
  const auto qf = TokenDistribution::from_logits<T>(dl.row(context.size() - 1), options.temperature);
  std::vector<Token> order(vocab);
  std::iota(order.begin(), order.end(), Token(0));
  std::stable_sort(order.begin(), order.end(), [&](Token a, Token b) { return pf[a] > pf[b]; });
  order.resize(options.vocab);
  std::vector<double> p(options.vocab), q(options.vocab);
  double ps = 0.0, qs = 0.0;
  for (std::size_t i = 0; i < options.vocab; ++i) {
    p[i] = pf[order[i]];
    q[i] = qf[order[i]];
    ps += p[i];
    qs += q[i];
  }
  for (auto& v : p) v /= ps;
  for (auto& v : q) v /= qs;
  auto res = lossless_test(TokenDistribution(std::move(p)), TokenDistribution(std::move(q)), options);
  res.symbols = std::move(order);
  return res;
}

namespace {

// Uniform index in [0, n) from uniform01; portable across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * double(n)));
}

template <class T>
double mean_loss(const Model<T>& model, const std::vector<Batch>& batches) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    total += loss_on_batch(model, b);
    tokens += b.batch_size * b.seq_len;
  }
  return total / double(tokens);
}

template <class T>
Model<T> without(const Model<T>& target, const std::vector<SublayerId>& ids) {
  ActiveMask mask = target.mask();
  for (const auto& id : ids) mask.set(id, false);
  return target.with_mask(std::move(mask));
}

}  // namespace

template <class T>
StudyResult prune_ordering_study(const Model<T>& target, const FitTable& fit,
                                 const Corpus& heldout, const StudyOptions& options) {
  if (!(options.ratio >= 0.0 && options.ratio < 1.0)) {
    throw ConfigError("study_ratio", "must lie in [0, 1)");
  }
  if (options.seeds.empty()) throw ConfigError("study_seeds", "need at least one seed");
  const auto ranked = rank_sublayers(fit);
  StudyResult res;
  res.pruned_count = static_cast<std::size_t>(std::floor(options.ratio * double(ranked.size()) + 1e-9));
  const std::size_t n = res.pruned_count;
  res.bottom.assign(ranked.begin(), ranked.begin() + n);
  res.top.assign(ranked.end() - n, ranked.end());
  std::mt19937_64 rng(options.random_seed);
  for (std::size_t s = 0; s < options.random_sets; ++s) {
    std::vector<SublayerId> pool = ranked;
    for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    res.random_sets.push_back(std::move(pool));
  }
  std::sort(res.bottom.begin(), res.bottom.end());
  std::sort(res.top.begin(), res.top.end());

  const Model<T> bottom_model = without(target, res.bottom);
  const Model<T> top_model = without(target, res.top);
  for (std::uint64_t seed : options.seeds) {
    const auto batches = sample_batches(heldout, options.batches_per_seed, options.batch_size,
                                        options.seq_len, seed);
    StudyRow row;
    row.seed = seed;
    row.base_loss = mean_loss(target, batches);
    row.bottom_delta = n ? mean_loss(bottom_model, batches) - row.base_loss : 0.0;
    row.top_delta = n ? mean_loss(top_model, batches) - row.base_loss : 0.0;
    double rsum = 0.0;
    if (n) {
      for (const auto& set : res.random_sets) rsum += mean_loss(without(target, set), batches) - row.base_loss;
    }
    row.random_delta = res.random_sets.empty() ? 0.0 : rsum / double(res.random_sets.size());
    res.rows.push_back(row);
  }
  for (const auto& r : res.rows) {
    res.mean_bottom += r.bottom_delta;
    res.mean_top += r.top_delta;
    res.mean_random += r.random_delta;
  }
  const double k = double(res.rows.size());
  res.mean_bottom /= k;
  res.mean_top /= k;
  res.mean_random /= k;
  res.bottom_not_worse = res.mean_bottom <= res.mean_top;
  res.random_between = res.mean_bottom <= res.mean_random && res.mean_random <= res.mean_top;
  return res;
}

#define SDFP_INSTANTIATE_BENCH(T)                                                              \
  template BenchResult bench<T>(const Model<T>&, const Model<T>&,                             \
                                const std::vector<std::vector<Token>>&,                       \
                                const GenerationParams&, std::size_t, double);                \
  template LosslessResult lossless_test<T>(const Model<T>&, const Model<T>&,                  \
                                           std::span<const Token>, const LosslessOptions&);   \
  template StudyResult prune_ordering_study<T>(const Model<T>&, const FitTable&,              \
                                               const Corpus&, const StudyOptions&);

SDFP_INSTANTIATE_BENCH(float)
SDFP_INSTANTIATE_BENCH(double)

#undef SDFP_INSTANTIATE_BENCH

}  // namespace sdfp
