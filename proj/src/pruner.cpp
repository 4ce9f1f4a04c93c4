#include "sdfp/pruner.hpp"

#include <algorithm>

#include "sdfp/errors.hpp"

namespace sdfp {

bool PruneSet::contains(SublayerId id) const {
  return std::binary_search(ids.begin(), ids.end(), id);
}

std::size_t PruneSet::count(SublayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(ids.begin(), ids.end(), [kind](const SublayerId& id) { return id.kind == kind; }));
}

void PruneSet::validate(const ModelConfig& config) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].layer >= config.n_layers) {
      throw ConfigError("prune_set", ids[i].str() + " is outside a " +
                                         std::to_string(config.n_layers) + "-layer model");
    }
    if (i > 0 && !(ids[i - 1] < ids[i])) {
      throw ConfigError("prune_set", "ids must be sorted and unique near " + ids[i].str());
    }
  }
}

template <class T>
Model<T> build_draft(const Model<T>& target, const PruneSet& prune_set) {
  prune_set.validate(target.config());
  ActiveMask mask = target.mask();
  for (const auto& id : prune_set.ids) mask.set(id, false);
  if (mask.count_active() == 0) {
    throw ConfigError("prune_set", "pruning every sublayer leaves an empty draft");
  }
  return target.with_mask(std::move(mask));
}

SublayerFlops sublayer_flops(const ModelConfig& c) {
  const double d = c.d_model, f = c.d_ff, v = c.vocab_size;
  SublayerFlops out;
  out.attention = 2.0 * d * 3.0 * d + 2.0 * d * d;
  out.ffn = 2.0 * d * f + 2.0 * f * d;
  out.head = 2.0 * d * v;
  return out;
}

double draft_cost_model(const ModelConfig& config, const PruneSet& prune_set) {
  config.validate();
  prune_set.validate(config);
  const auto fl = sublayer_flops(config);
  const double full = config.n_layers * (fl.attention + fl.ffn) + fl.head;
  const double removed = prune_set.count(SublayerKind::kAttention) * fl.attention +
                         prune_set.count(SublayerKind::kFfn) * fl.ffn;
  return (full - removed) / full;
}

template Model<float> build_draft<float>(const Model<float>&, const PruneSet&);
template Model<double> build_draft<double>(const Model<double>&, const PruneSet&);

}  // namespace sdfp
