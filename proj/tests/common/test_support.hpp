#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "sdfp/autodiff.hpp"
#include "sdfp/corpus.hpp"
#include "sdfp/transformer.hpp"

namespace sdfp::testing {

// Relative gradient error |a - b| / max(|a|, |b|, floor). Below the floor the
// comparison degrades to an absolute one scaled by the floor, so entries that
// are zero up to rounding do not dominate.
inline constexpr double kGradRelFloor = 1e-4;
inline constexpr double kFdStep = 1e-5;

inline double rel_error(double a, double b, double floor = kGradRelFloor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

using OpBuilder =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>& inputs)>;

// Max relative error between the tape's vector-Jacobian product for a random
// cotangent and central differences of <cotangent, op(inputs)>, over every
// element of every input.
inline double op_gradient_error(const OpBuilder& op, const std::vector<Tensor<double>>& inputs,
                                std::mt19937_64& rng) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.parameter(i, inputs[i]));
  const Var<double> out = op(tape, vars);
  const Tensor<double> cot = random_tensor(out.shape(), rng);
  const auto grads = tape.vjp(out, cot);

  auto probe = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t(false);
    std::vector<Var<double>> vs;
    for (std::size_t i = 0; i < xs.size(); ++i) vs.push_back(t.parameter(i, xs[i]));
    return dot(op(t, vs).value(), cot);
  };
  double worst = 0.0;
  std::vector<Tensor<double>> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xs[i].size(); ++j) {
      const double orig = xs[i][j];
      xs[i][j] = orig + kFdStep;
      const double up = probe(xs);
      xs[i][j] = orig - kFdStep;
      const double down = probe(xs);
      xs[i][j] = orig;
      worst = std::max(worst, rel_error(grads.at(i)[j], (up - down) / (2 * kFdStep)));
    }
  }
  return worst;
}

inline ModelConfig tiny_config(std::uint32_t layers = 2) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = layers;
  c.d_ff = 16;
  c.max_context = 16;
  c.rng_seed = 5;
  return c;
}

// Every parameter redrawn at `scale` (layer-norm gains around 1), so gradients
// are well away from zero and every branch carries signal.
template <class T>
Model<T> randomized_model(const ModelConfig& config, std::uint64_t seed, double scale = 0.3) {
  const Model<T> base = init_model<T>(config);
  const auto& layout = base.weights().layout();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<Tensor<T>> params = base.weights().params();
  for (ParamId id = 0; id < params.size(); ++id) {
    const bool gain = layout.name(id).find("gamma") != std::string::npos;
    for (auto& v : params[id].mutable_data()) v = static_cast<T>((gain ? 1.0 : 0.0) + n(rng));
  }
  return Model<T>(std::make_shared<const Weights<T>>(config, std::move(params)), base.mask());
}

inline Corpus random_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Corpus c;
  c.name = "random";
  for (std::size_t i = 0; i < n; ++i) c.tokens.push_back(static_cast<Token>(rng() % 257));
  return c;
}

inline std::vector<Token> random_tokens(std::size_t n, std::uint64_t seed, Token vocab = 257) {
  std::mt19937_64 rng(seed);
  std::vector<Token> t(n);
  for (auto& x : t) x = static_cast<Token>(rng() % vocab);
  return t;
}

}  // namespace sdfp::testing
