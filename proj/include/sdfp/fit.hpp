#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdfp/pruner.hpp"
#include "sdfp/transformer.hpp"

namespace sdfp {

// How squared gradient norms are accumulated.
//   kMinibatch: T_l = (1 / n_batches) * sum_B ||grad_l f(B)||^2, where f(B)
//               is the summed loss of the whole minibatch.
//   kPerSample: T_l = (1 / n_sequences) * sum_i ||grad_l f(z_i)||^2 with one
//               backward pass per sequence z_i.
enum class FitConvention { kMinibatch, kPerSample };

const char* to_string(FitConvention c);
FitConvention fit_convention_from_string(const std::string& s);

struct FitOptions {
  FitConvention convention = FitConvention::kMinibatch;
  std::size_t threads = 1;
  // Multiplies the calibration loss before differentiation.
  double loss_scale = 1.0;
};

struct FitTable {
  std::map<SublayerId, double> scores;
  // Divisor applied to the accumulated norms (batches or sequences).
  std::size_t normalizer = 0;
  FitConvention convention = FitConvention::kMinibatch;
  std::size_t n_batches = 0;
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::string corpus;
  std::uint64_t seed = 0;
  double loss_scale = 1.0;

  double score(SublayerId id) const;
  // FNV-1a over ids and raw score bits; recorded in prune sets.
  std::uint64_t fingerprint() const;
};

// One forward-backward pass per minibatch (or per sequence). Entries for every
// active sublayer of `model`. The result does not depend on batch order or
// on the thread count: per-batch contributions are sorted before summation.
template <class T>
FitTable accumulate_fit(const Model<T>& model, std::span<const Batch> batches,
                        const FitOptions& options = {});

// Ascending T; ties put the higher layer first, then FFN before attention.
std::vector<SublayerId> rank_sublayers(const FitTable& fit);

// floor(ratio * count) lowest-ranked sublayers of each kind. Ratios must lie
// in [0, 1).
PruneSet select_prune_set(const FitTable& fit, double attn_ratio, double ffn_ratio);

// Ranked report with raw T and log10(T); log10(0) is written as "-inf".
std::string fit_report_json(const FitTable& fit);
std::string fit_report_text(const FitTable& fit);
FitTable parse_fit_report(std::string_view json);

struct KlCheckResult {
  double epsilon = 0.0;
  double measured_kl = 0.0;   // mean over contexts of KL(p_theta || p_theta+d)
  double predicted_kl = 0.0;  // mean over contexts of 0.5 d^T F d
  double ratio = 0.0;         // measured / predicted
};

// Compares the exact next-token KL after a parameter perturbation
// epsilon * direction with the quadratic form of the true Fisher at each
// context, F = E_{y ~ p}[grad log p(y) grad log p(y)^T], evaluated by
// enumerating the vocabulary. `direction` holds one tensor per parameter.
KlCheckResult kl_quadratic_check(const Model<double>& model,
                                 std::span<const std::vector<Token>> contexts,
                                 const std::vector<Tensor<double>>& direction,
                                 double epsilon);

// Unit-norm Gaussian direction over every parameter.
std::vector<Tensor<double>> random_unit_direction(const Model<double>& model,
                                                  std::mt19937_64& rng);

// Draws `n_contexts` random contexts of `context_len` tokens and a random
// unit direction from `rng`, then runs the check.
KlCheckResult kl_quadratic_check(const Model<double>& model, double epsilon,
                                 std::mt19937_64& rng, std::size_t n_contexts = 4,
                                 std::size_t context_len = 8);

}  // namespace sdfp
