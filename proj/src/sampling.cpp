#include "sdfp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdfp/errors.hpp"

namespace sdfp {

TokenDistribution::TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DimensionError("empty token distribution");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw NumericError("token distribution has a negative or non-finite entry");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError("token distribution sums to " + std::to_string(total));
  }
}

template <class T>
TokenDistribution TokenDistribution::from_logits(std::span<const T> logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature", "must be positive");
  if (logits.empty()) throw DimensionError("empty logits");
  double mx = double(logits[0]);
  for (T v : logits) mx = std::max(mx, double(v));
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((double(logits[i]) - mx) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  TokenDistribution out;
  out.probs_ = std::move(p);
  return out;
}

TokenDistribution TokenDistribution::unchecked(std::vector<double> probs) {
  TokenDistribution out;
  out.probs_ = std::move(probs);
  return out;
}

Token TokenDistribution::argmax() const {
  return static_cast<Token>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

Token sample_categorical(const TokenDistribution& dist, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cum += dist[i];
    last = i;
    if (u < cum) return static_cast<Token>(i);
  }
  // Rounding left the cumulative sum just below u.
  return static_cast<Token>(last);
}

double acceptance_prob(const TokenDistribution& p, const TokenDistribution& q, Token token) {
  if (p.size() != q.size()) throw DimensionError("p and q have different vocabularies");
  if (token >= p.size()) throw IndexError("token " + std::to_string(token) + " out of range");
  if (!(q[token] > 0.0)) {
    throw UsageError("draft probability of proposed token " + std::to_string(token) + " is zero");
  }
  return std::min(1.0, p[token] / q[token]);
}

TokenDistribution residual_distribution(const TokenDistribution& p, const TokenDistribution& q) {
  if (p.size() != q.size()) throw DimensionError("p and q have different vocabularies");
  std::vector<double> r(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = std::max(0.0, p[i] - q[i]);
    total += r[i];
  }
  if (!(total > 0.0)) throw UsageError("residual is empty: p <= q everywhere, rejection impossible");
  for (auto& v : r) v /= total;
  return TokenDistribution(std::move(r));
}

template TokenDistribution TokenDistribution::from_logits<float>(std::span<const float>, double);
template TokenDistribution TokenDistribution::from_logits<double>(std::span<const double>, double);

}  // namespace sdfp
