#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "sdfp/corpus.hpp"
#include "sdfp/transformer.hpp"

namespace sdfp {

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t warmup_steps = 100;
  // Global gradient-norm clip on the per-token mean gradient; 0 disables.
  double grad_clip = 1.0;
  // One full-context window per step, so every position embedding trains.
  std::size_t batch_size = 1;
  std::size_t seq_len = 256;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainResult {
  Model<float> model;
  std::vector<double> loss_curve;  // mean per-token loss at each step
};

using TrainProgress = std::function<void(std::size_t step, double loss)>;

// SGD with momentum and linear warmup over the training corpus. Fully
// deterministic for a given (model, corpus, config).
TrainResult train(const Model<float>& model, const Corpus& corpus,
                  const TrainConfig& config, const TrainProgress& progress = {});

// Trailing moving average with the given window.
std::vector<double> smooth_curve(const std::vector<double>& curve, std::size_t window);

std::string loss_curve_csv(const std::vector<double>& curve);

}  // namespace sdfp
