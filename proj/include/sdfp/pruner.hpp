#pragma once

#include <cstdint>
#include <vector>

#include "sdfp/transformer.hpp"

namespace sdfp {

// Sublayers to bypass in the draft, with the ratios and the FIT table they
// were selected from.
struct PruneSet {
  std::vector<SublayerId> ids;  // sorted, unique
  std::uint64_t fit_fingerprint = 0;
  double attn_ratio = 0.0;
  double ffn_ratio = 0.0;

  bool contains(SublayerId id) const;
  std::size_t count(SublayerKind kind) const;
  // Ids in range for the config, sorted and without duplicates.
  void validate(const ModelConfig& config) const;
};

// Draft = target with the pruned sublayers switched off. Shares the target's
// weight storage; the target is not touched.
template <class T>
Model<T> build_draft(const Model<T>& target, const PruneSet& prune_set);

// Per-token FLOPs of the full model (every sublayer plus the output head)
// relative to the same model with `prune_set` removed.
struct SublayerFlops {
  double attention = 0.0;  // QKV and output projections
  double ffn = 0.0;        // both FFN projections
  double head = 0.0;       // tied output projection, never pruned
};
SublayerFlops sublayer_flops(const ModelConfig& config);
double draft_cost_model(const ModelConfig& config, const PruneSet& prune_set);

}  // namespace sdfp
