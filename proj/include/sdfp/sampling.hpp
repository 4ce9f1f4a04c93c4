#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sdfp/transformer.hpp"

namespace sdfp {

// Probability vector over the vocabulary, kept in double whatever the model
// precision.
class TokenDistribution {
 public:
  TokenDistribution() = default;
  // Checks non-negativity and that the mass sums to 1 within 1e-9.
  explicit TokenDistribution(std::vector<double> probs);

  // softmax(logits / temperature) with max subtraction.
  template <class T>
  static TokenDistribution from_logits(std::span<const T> logits, double temperature = 1.0);
  // No validation at all. Exists so tests can feed deliberately broken
  // distributions through the sampling code.
  static TokenDistribution unchecked(std::vector<double> probs);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }
  // Lowest index among the maxima.
  Token argmax() const;

 private:
  std::vector<double> probs_;
};

// Uniform double in [0, 1) from the top 53 bits of one generator draw, so the
// stream is identical on every platform.
double uniform01(std::mt19937_64& rng);

// Inverse-CDF draw; consumes exactly one uniform01.
Token sample_categorical(const TokenDistribution& dist, std::mt19937_64& rng);

// min(1, p(token) / q(token)). q(token) must be positive.
double acceptance_prob(const TokenDistribution& p, const TokenDistribution& q, Token token);

// max(0, p - q) normalized. UsageError when p and q leave no positive mass.
TokenDistribution residual_distribution(const TokenDistribution& p, const TokenDistribution& q);

}  // namespace sdfp
