#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdfp/autodiff.hpp"
#include "sdfp/tensor.hpp"

namespace sdfp {

using Token = std::uint32_t;

inline constexpr Token kEosToken = 256;
inline constexpr std::uint32_t kByteVocabSize = 257;

struct ModelConfig {
  std::uint32_t vocab_size = kByteVocabSize;
  std::uint32_t d_model = 128;
  std::uint32_t n_heads = 8;
  std::uint32_t n_layers = 8;
  std::uint32_t d_ff = 512;
  std::uint32_t max_context = 256;
  std::uint32_t rng_seed = 0;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  std::uint32_t head_dim() const { return d_model / n_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class SublayerKind : std::uint8_t { kAttention = 0, kFfn = 1 };

const char* to_string(SublayerKind kind);
SublayerKind sublayer_kind_from_string(const std::string& s);

// One prunable unit: the attention block or the FFN block of a layer.
struct SublayerId {
  std::uint32_t layer = 0;
  SublayerKind kind = SublayerKind::kAttention;

  std::string str() const;
  friend auto operator<=>(const SublayerId&, const SublayerId&) = default;
};

// Enabled sublayers, two bits per layer (attention first).
class ActiveMask {
 public:
  ActiveMask() = default;
  static ActiveMask full(std::uint32_t n_layers);
  static ActiveMask none(std::uint32_t n_layers);

  std::uint32_t n_layers() const { return static_cast<std::uint32_t>(bits_.size() / 2); }
  bool active(SublayerId id) const;
  void set(SublayerId id, bool on);
  std::size_t count_active() const;
  std::vector<SublayerId> active_ids() const;
  std::vector<SublayerId> all_ids() const;

  // Bit i of the packed form is bits_[i]; bytes are LSB-first.
  std::vector<std::uint8_t> packed() const;
  static ActiveMask from_packed(std::span<const std::uint8_t> bytes,
                                std::uint32_t n_layers);

  friend bool operator==(const ActiveMask&, const ActiveMask&) = default;

 private:
  explicit ActiveMask(std::vector<bool> bits) : bits_(std::move(bits)) {}
  std::size_t bit(SublayerId id) const;

  std::vector<bool> bits_;
};

// Fixed parameter order shared by the model, the checkpoint format and the
// gradient records:
//   0 token_embedding [V x D]    (tied with the output head)
//   1 position_embedding [C x D]
//   per layer l, base 2 + 12 l:
//     attention: ln_gamma, ln_beta, w_qkv [D x 3D], b_qkv, w_out [D x D], b_out
//     ffn:       ln_gamma, ln_beta, w_fc [D x F], b_fc, w_proj [F x D], b_proj
//   2 + 12 L final_ln_gamma, 3 + 12 L final_ln_beta
class ParamLayout {
 public:
  enum Slot : std::size_t {
    kLnGamma = 0, kLnBeta = 1, kWIn = 2, kBIn = 3, kWOut = 4, kBOut = 5
  };
  static constexpr std::size_t kPerSublayer = 6;

  explicit ParamLayout(const ModelConfig& config) : config_(config) {}

  std::size_t count() const { return 4 + 2 * kPerSublayer * config_.n_layers; }
  Shape shape(ParamId id) const;
  std::string name(ParamId id) const;

  ParamId token_embedding() const { return 0; }
  ParamId position_embedding() const { return 1; }
  ParamId sublayer_param(SublayerId id, Slot slot) const;
  ParamId final_ln_gamma() const { return 2 + 2 * kPerSublayer * config_.n_layers; }
  ParamId final_ln_beta() const { return final_ln_gamma() + 1; }

  std::vector<ParamId> sublayer_params(SublayerId id) const;
  std::size_t total_elements() const;

 private:
  ModelConfig config_;
};

// Immutable parameter storage. A target and every draft built from it share
// one instance.
template <class T>
class Weights {
 public:
  Weights(ModelConfig config, std::vector<Tensor<T>> params);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  const Tensor<T>& param(ParamId id) const { return params_.at(id); }
  // token_embedding transposed to [D x V] for the output head.
  const Tensor<T>& head_matrix() const { return head_matrix_; }

  // FNV-1a over config and raw parameter bytes.
  std::uint64_t checksum() const;

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<Tensor<T>> params_;
  Tensor<T> head_matrix_;
};

template <class T>
class Model;
template <class T>
class KvCache;

// Logits [tokens.size() x vocab] for the new positions. With a cache, the new
// tokens are appended after cached_len() and the cache is extended; without
// one, the tokens are a complete sequence starting at position 0.
template <class T>
Tensor<T> forward_logits(const Model<T>& model, std::span<const Token> tokens,
                         KvCache<T>* cache = nullptr);

// Per-session attention state for the active attention sublayers of one
// model. Single owner; never shared between models with different masks.
template <class T>
class KvCache {
 public:
  KvCache() = default;

  std::size_t cached_len() const { return len_; }
  std::size_t capacity() const { return capacity_; }
  const std::vector<std::uint32_t>& attention_layers() const { return layers_; }

  // Keeps the first n positions. n must not exceed cached_len().
  void truncate(std::size_t n);

  // [n_heads x cached_len x head_dim] views for inspection.
  Tensor<T> keys(std::uint32_t layer) const;
  Tensor<T> values(std::uint32_t layer) const;

 private:
  friend class Model<T>;
  template <class U>
  friend Tensor<U> forward_logits(const Model<U>&, std::span<const Token>,
                                  KvCache<U>*);

  std::size_t slot(std::uint32_t layer) const;
  Tensor<T> head_view(const std::vector<T>& store, bool transposed) const;

  std::vector<std::uint32_t> layers_;
  // Per slot. Keys are stored transposed, [d_model x capacity], so attention
  // scores over positions vectorize; values are [capacity x d_model].
  std::vector<std::vector<T>> k_, v_;
  std::size_t len_ = 0;
  std::size_t capacity_ = 0;
  std::uint32_t d_model_ = 0;
  std::uint32_t n_heads_ = 0;
};

template <class T>
class Model {
 public:
  Model(std::shared_ptr<const Weights<T>> weights, ActiveMask mask);

  const ModelConfig& config() const { return weights_->config(); }
  const Weights<T>& weights() const { return *weights_; }
  const std::shared_ptr<const Weights<T>>& shared_weights() const { return weights_; }
  const ActiveMask& mask() const { return mask_; }

  // Same weights, different set of enabled sublayers.
  Model with_mask(ActiveMask mask) const { return Model(weights_, std::move(mask)); }
  KvCache<T> new_cache() const;

  template <class U>
  Model<U> cast() const {
    std::vector<Tensor<U>> params;
    params.reserve(weights_->params().size());
    for (const auto& p : weights_->params()) params.push_back(p.template cast<U>());
    return Model<U>(std::make_shared<const Weights<U>>(config(), std::move(params)), mask_);
  }

 private:
  std::shared_ptr<const Weights<T>> weights_;
  ActiveMask mask_;
};

// Scaled-normal init from config.rng_seed; residual output projections use
// std 0.02 / sqrt(2 L). Full active mask.
template <class T>
Model<T> init_model(const ModelConfig& config);

// Contiguous token windows: inputs[b][t] predicts targets[b][t].
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::vector<Token> inputs;
  std::vector<Token> targets;

  std::span<const Token> input_row(std::size_t b) const {
    return std::span<const Token>(inputs).subspan(b * seq_len, seq_len);
  }
  std::span<const Token> target_row(std::size_t b) const {
    return std::span<const Token>(targets).subspan(b * seq_len, seq_len);
  }
  // The single-sequence batch holding row b.
  Batch row_batch(std::size_t b) const;
};

// Summed next-token cross-entropy over every position of the batch, computed
// on the untraced inference path.
template <class T>
double loss_on_batch(const Model<T>& model, const Batch& batch);

template <class T>
struct LossAndGrad {
  double loss = 0.0;  // of the unscaled summed loss
  GradientRecord<T> grads;
};

// One traced forward-backward pass over the batch. Gradients are of
// loss_scale * summed loss, for every parameter (zero for disabled
// sublayers).
template <class T>
LossAndGrad<T> loss_and_gradients(const Model<T>& model, const Batch& batch,
                                  T loss_scale = T(1));

// Traced logits [batch*seq x vocab] with every parameter registered on the
// tape. `param_vars` receives the registered leaves in ParamLayout order.
template <class T>
Var<T> traced_logits(Tape<T>& tape, const Model<T>& model,
                     std::span<const Token> tokens, std::size_t batch,
                     std::size_t seq, std::vector<Var<T>>* param_vars = nullptr);

extern template class Weights<float>;
extern template class Weights<double>;
extern template class KvCache<float>;
extern template class KvCache<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace sdfp
