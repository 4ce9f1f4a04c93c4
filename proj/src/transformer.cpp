#include "sdfp/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "sdfp/kernels.hpp"

namespace sdfp {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size", "must be at least 2");
  if (d_model == 0) throw ConfigError("d_model", "must be positive");
  if (n_heads == 0) throw ConfigError("n_heads", "must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("n_heads", "d_model " + std::to_string(d_model) +
                                     " is not divisible by " + std::to_string(n_heads));
  }
  if (n_layers < 1) throw ConfigError("n_layers", "must be at least 1");
  if (d_ff == 0) throw ConfigError("d_ff", "must be positive");
  if (max_context < 2) throw ConfigError("max_context", "must be at least 2");
}

const char* to_string(SublayerKind kind) {
  return kind == SublayerKind::kAttention ? "attention" : "ffn";
}

SublayerKind sublayer_kind_from_string(const std::string& s) {
  if (s == "attention") return SublayerKind::kAttention;
  if (s == "ffn") return SublayerKind::kFfn;
  throw UsageError("unknown sublayer kind '" + s + "'");
}

std::string SublayerId::str() const {
  return "L" + std::to_string(layer) +
         (kind == SublayerKind::kAttention ? ".attn" : ".ffn");
}

ActiveMask ActiveMask::full(std::uint32_t n_layers) {
  return ActiveMask(std::vector<bool>(2 * n_layers, true));
}

ActiveMask ActiveMask::none(std::uint32_t n_layers) {
  return ActiveMask(std::vector<bool>(2 * n_layers, false));
}

std::size_t ActiveMask::bit(SublayerId id) const {
  if (id.layer >= n_layers()) {
    throw IndexError("sublayer " + id.str() + " out of range for " +
                     std::to_string(n_layers()) + " layers");
  }
  return 2 * std::size_t{id.layer} + (id.kind == SublayerKind::kFfn ? 1 : 0);
}

bool ActiveMask::active(SublayerId id) const { return bits_[bit(id)]; }

void ActiveMask::set(SublayerId id, bool on) { bits_[bit(id)] = on; }

std::size_t ActiveMask::count_active() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

std::vector<SublayerId> ActiveMask::all_ids() const {
  std::vector<SublayerId> ids;
  for (std::uint32_t l = 0; l < n_layers(); ++l) {
    ids.push_back({l, SublayerKind::kAttention});
    ids.push_back({l, SublayerKind::kFfn});
  }
  return ids;
}

std::vector<SublayerId> ActiveMask::active_ids() const {
  std::vector<SublayerId> ids;
  for (const auto& id : all_ids())
    if (active(id)) ids.push_back(id);
  return ids;
}

std::vector<std::uint8_t> ActiveMask::packed() const {
  std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

ActiveMask ActiveMask::from_packed(std::span<const std::uint8_t> bytes,
                                   std::uint32_t n_layers) {
  const std::size_t n_bits = 2 * std::size_t{n_layers};
  if (bytes.size() != (n_bits + 7) / 8) {
    throw DimensionError("mask needs " + std::to_string((n_bits + 7) / 8) +
                         " bytes, got " + std::to_string(bytes.size()));
  }
  std::vector<bool> bits(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return ActiveMask(std::move(bits));
}

// ---------------------------------------------------------------------------

ParamId ParamLayout::sublayer_param(SublayerId id, Slot slot) const {
  if (id.layer >= config_.n_layers) {
    throw IndexError("sublayer " + id.str() + " out of range");
  }
  return 2 + 2 * kPerSublayer * id.layer +
         (id.kind == SublayerKind::kFfn ? kPerSublayer : 0) + slot;
}

std::vector<ParamId> ParamLayout::sublayer_params(SublayerId id) const {
  std::vector<ParamId> ids;
  for (std::size_t s = 0; s < kPerSublayer; ++s)
    ids.push_back(sublayer_param(id, static_cast<Slot>(s)));
  return ids;
}

Shape ParamLayout::shape(ParamId id) const {
  const std::size_t d = config_.d_model;
  if (id == token_embedding()) return {config_.vocab_size, d};
  if (id == position_embedding()) return {config_.max_context, d};
  if (id == final_ln_gamma() || id == final_ln_beta()) return {d};
  if (id >= count()) throw IndexError("parameter id " + std::to_string(id) + " out of range");
  const std::size_t within = (id - 2) % (2 * kPerSublayer);
  const bool ffn = within >= kPerSublayer;
  const std::size_t width = ffn ? config_.d_ff : 3 * d;
  switch (within % kPerSublayer) {
    case kLnGamma:
    case kLnBeta: return {d};
    case kWIn: return {d, width};
    case kBIn: return {width};
    case kWOut: return {ffn ? config_.d_ff : d, d};
    default: return {d};
  }
}

std::string ParamLayout::name(ParamId id) const {
  if (id == token_embedding()) return "token_embedding";
  if (id == position_embedding()) return "position_embedding";
  if (id == final_ln_gamma()) return "final_ln.gamma";
  if (id == final_ln_beta()) return "final_ln.beta";
  if (id >= count()) throw IndexError("parameter id " + std::to_string(id) + " out of range");
  static const char* kAttn[] = {"ln.gamma", "ln.beta", "w_qkv", "b_qkv", "w_out", "b_out"};
  static const char* kFfn[] = {"ln.gamma", "ln.beta", "w_fc", "b_fc", "w_proj", "b_proj"};
  const std::size_t layer = (id - 2) / (2 * kPerSublayer);
  const std::size_t within = (id - 2) % (2 * kPerSublayer);
  const bool ffn = within >= kPerSublayer;
  return "layer" + std::to_string(layer) + (ffn ? ".ffn." : ".attn.") +
         (ffn ? kFfn : kAttn)[within % kPerSublayer];
}

std::size_t ParamLayout::total_elements() const {
  std::size_t total = 0;
  for (ParamId id = 0; id < count(); ++id) total += shape_numel(shape(id));
  return total;
}

// ---------------------------------------------------------------------------

template <class T>
Weights<T>::Weights(ModelConfig config, std::vector<Tensor<T>> params)
    : config_(config), layout_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != layout_.count()) {
    throw DimensionError("expected " + std::to_string(layout_.count()) +
                         " parameter tensors, got " + std::to_string(params_.size()));
  }
  for (ParamId id = 0; id < params_.size(); ++id) {
    if (params_[id].shape() != layout_.shape(id)) {
      throw DimensionError(layout_.name(id) + " has shape " +
                           shape_str(params_[id].shape()) + ", expected " +
                           shape_str(layout_.shape(id)));
    }
  }
  const auto& emb = params_[layout_.token_embedding()];
  head_matrix_ = Tensor<T>::zeros({config_.d_model, config_.vocab_size});
  kernels::transpose<T>(emb.data(), head_matrix_.mutable_data(), config_.vocab_size,
                        config_.d_model);
}

template <class T>
std::uint64_t Weights<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::uint32_t fields[] = {config_.vocab_size, config_.d_model, config_.n_heads,
                                  config_.n_layers,   config_.d_ff,    config_.max_context,
                                  config_.rng_seed};
  mix(fields, sizeof(fields));
  for (const auto& p : params_) mix(p.data().data(), p.size() * sizeof(T));
  return h;
}

// ---------------------------------------------------------------------------

template <class T>
std::size_t KvCache<T>::slot(std::uint32_t layer) const {
  auto it = std::find(layers_.begin(), layers_.end(), layer);
  if (it == layers_.end()) {
    throw UsageError("layer " + std::to_string(layer) + " has no cached attention");
  }
  return static_cast<std::size_t>(it - layers_.begin());
}

template <class T>
void KvCache<T>::truncate(std::size_t n) {
  if (n > len_) {
    throw UsageError("cannot truncate cache of length " + std::to_string(len_) +
                     " to " + std::to_string(n));
  }
  len_ = n;
}

template <class T>
Tensor<T> KvCache<T>::head_view(const std::vector<T>& store, bool transposed) const {
  const std::size_t hd = d_model_ / n_heads_;
  auto out = Tensor<T>::zeros({n_heads_, len_, hd});
  auto od = out.mutable_data();
  for (std::size_t h = 0; h < n_heads_; ++h)
    for (std::size_t p = 0; p < len_; ++p)
      for (std::size_t e = 0; e < hd; ++e) {
        const std::size_t col = h * hd + e;
        od[(h * len_ + p) * hd + e] =
            transposed ? store[col * capacity_ + p] : store[p * d_model_ + col];
      }
  return out;
}

template <class T>
Tensor<T> KvCache<T>::keys(std::uint32_t layer) const {
  return head_view(k_[slot(layer)], true);
}

template <class T>
Tensor<T> KvCache<T>::values(std::uint32_t layer) const {
  return head_view(v_[slot(layer)], false);
}

// ---------------------------------------------------------------------------

template <class T>
Model<T>::Model(std::shared_ptr<const Weights<T>> weights, ActiveMask mask)
    : weights_(std::move(weights)), mask_(std::move(mask)) {
  if (!weights_) throw UsageError("model needs weights");
  if (mask_.n_layers() != weights_->config().n_layers) {
    throw DimensionError("mask covers " + std::to_string(mask_.n_layers()) +
                         " layers, model has " +
                         std::to_string(weights_->config().n_layers));
  }
}

template <class T>
KvCache<T> Model<T>::new_cache() const {
  KvCache<T> cache;
  const auto& c = config();
  cache.capacity_ = c.max_context;
  cache.d_model_ = c.d_model;
  cache.n_heads_ = c.n_heads;
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    if (!mask_.active({l, SublayerKind::kAttention})) continue;
    cache.layers_.push_back(l);
    cache.k_.emplace_back(std::size_t{c.max_context} * c.d_model, T(0));
    cache.v_.emplace_back(std::size_t{c.max_context} * c.d_model, T(0));
  }
  return cache;
}

template <class T>
Model<T> init_model(const ModelConfig& config) {
  config.validate();
  ParamLayout layout(config);
  std::mt19937_64 rng(config.rng_seed);
  const T std_dev = T(0.02);
  const T residual_std = T(0.02 / std::sqrt(2.0 * config.n_layers));
  std::vector<Tensor<T>> params;
  params.reserve(layout.count());
  for (ParamId id = 0; id < layout.count(); ++id) {
    const Shape shape = layout.shape(id);
    const std::string name = layout.name(id);
    auto t = Tensor<T>::zeros(shape);
    const bool is_gamma = name.find("gamma") != std::string::npos;
    const bool is_bias = name.find(".b_") != std::string::npos ||
                         name.find("beta") != std::string::npos;
    if (is_gamma) {
      for (auto& v : t.mutable_data()) v = T(1);
    } else if (!is_bias) {
      const bool residual = name.ends_with("w_out") || name.ends_with("w_proj");
      std::normal_distribution<double> dist(0.0, residual ? residual_std : std_dev);
      for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
    }
    params.push_back(std::move(t));
  }
  return Model<T>(std::make_shared<const Weights<T>>(config, std::move(params)),
                  ActiveMask::full(config.n_layers));
}

namespace {

template <class T>
void check_tokens(const ModelConfig& c, std::span<const Token> tokens) {
  for (Token t : tokens) {
    if (t >= c.vocab_size) {
      throw IndexError("token id " + std::to_string(t) + " out of range for vocab " +
                       std::to_string(c.vocab_size));
    }
  }
}

}  // namespace

template <class T>
Tensor<T> forward_logits(const Model<T>& model, std::span<const Token> tokens,
                         KvCache<T>* cache) {
  const auto& c = model.config();
  const auto& w = model.weights();
  const auto& layout = w.layout();
  check_tokens<T>(c, tokens);

  KvCache<T> local;
  if (!cache) {
    local = model.new_cache();
    cache = &local;
  } else {
    std::vector<std::uint32_t> expected;
    for (std::uint32_t l = 0; l < c.n_layers; ++l)
      if (model.mask().active({l, SublayerKind::kAttention})) expected.push_back(l);
    if (cache->layers_ != expected || cache->capacity_ != c.max_context ||
        cache->d_model_ != c.d_model) {
      throw UsageError("KV cache was created for a different model or mask");
    }
  }
  const std::size_t n = tokens.size();
  const std::size_t p0 = cache->len_;
  if (p0 + n > c.max_context) {
    throw CapacityError("context overflow: " + std::to_string(p0) + " cached + " +
                        std::to_string(n) + " new > max_context " +
                        std::to_string(c.max_context));
  }
  const std::size_t d = c.d_model, f = c.d_ff, heads = c.n_heads, hd = c.head_dim();
  if (n == 0) return Tensor<T>::zeros({0, c.vocab_size});

  std::vector<T> x(n * d);
  {
    const auto& tok = w.param(layout.token_embedding());
    const auto& pos = w.param(layout.position_embedding());
    for (std::size_t i = 0; i < n; ++i) {
      auto te = tok.row(tokens[i]);
      auto pe = pos.row(p0 + i);
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = te[j] + pe[j];
    }
  }

  std::vector<T> h(n * d), qkv(n * 3 * d), att(n * d), proj(n * d), ff(n * f);
  std::vector<T> scores(c.max_context);
  const T inv_sqrt = T(1) / std::sqrt(T(hd));
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    const SublayerId attn_id{l, SublayerKind::kAttention};
    if (model.mask().active(attn_id)) {
      auto p = [&](ParamLayout::Slot s) -> const Tensor<T>& {
        return w.param(layout.sublayer_param(attn_id, s));
      };
      kernels::layer_norm<T>(x, p(ParamLayout::kLnGamma).data(),
                             p(ParamLayout::kLnBeta).data(), h, n, d);
      kernels::matmul<T>(h, p(ParamLayout::kWIn).data(), qkv, n, d, 3 * d);
      kernels::add_row_bias<T>(qkv, p(ParamLayout::kBIn).data(), n, 3 * d);
      const std::size_t s = cache->slot(l);
      const std::size_t cap = c.max_context;
      T* kstore = cache->k_[s].data();  // transposed: [d_model x capacity]
      T* vstore = cache->v_[s].data();
      for (std::size_t i = 0; i < n; ++i) {
        const T* krow = qkv.data() + i * 3 * d + d;
        for (std::size_t j = 0; j < d; ++j) kstore[j * cap + p0 + i] = krow[j];
        std::copy_n(qkv.data() + i * 3 * d + 2 * d, d, vstore + (p0 + i) * d);
      }
      std::fill(att.begin(), att.end(), T(0));
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t visible = p0 + i + 1;
        for (std::size_t hh = 0; hh < heads; ++hh) {
          const T* q = qkv.data() + i * 3 * d + hh * hd;
          T* sc = scores.data();
          std::fill_n(sc, visible, T(0));
          for (std::size_t e = 0; e < hd; ++e) {
            const T qe = q[e];
            const T* kr = kstore + (hh * hd + e) * cap;
            for (std::size_t sp = 0; sp < visible; ++sp) sc[sp] += qe * kr[sp];
          }
          for (std::size_t sp = 0; sp < visible; ++sp) sc[sp] *= inv_sqrt;
          kernels::softmax_inplace<T>(std::span<T>(sc, visible));
          T* o = att.data() + i * d + hh * hd;
          for (std::size_t sp = 0; sp < visible; ++sp) {
            const T* v = vstore + sp * d + hh * hd;
            const T ps = sc[sp];
            for (std::size_t e = 0; e < hd; ++e) o[e] += ps * v[e];
          }
        }
      }
      kernels::matmul<T>(att, p(ParamLayout::kWOut).data(), proj, n, d, d);
      kernels::add_row_bias<T>(proj, p(ParamLayout::kBOut).data(), n, d);
      for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];
    }
    const SublayerId ffn_id{l, SublayerKind::kFfn};
    if (model.mask().active(ffn_id)) {
      auto p = [&](ParamLayout::Slot s) -> const Tensor<T>& {
        return w.param(layout.sublayer_param(ffn_id, s));
      };
      kernels::layer_norm<T>(x, p(ParamLayout::kLnGamma).data(),
                             p(ParamLayout::kLnBeta).data(), h, n, d);
      kernels::matmul<T>(h, p(ParamLayout::kWIn).data(), ff, n, d, f);
      kernels::add_row_bias<T>(ff, p(ParamLayout::kBIn).data(), n, f);
      kernels::gelu_inplace<T>(ff);
      kernels::matmul<T>(ff, p(ParamLayout::kWOut).data(), proj, n, f, d);
      kernels::add_row_bias<T>(proj, p(ParamLayout::kBOut).data(), n, d);
      for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];
    }
  }
  kernels::layer_norm<T>(x, w.param(layout.final_ln_gamma()).data(),
                         w.param(layout.final_ln_beta()).data(), h, n, d);
  auto logits = Tensor<T>::zeros({n, c.vocab_size});
  kernels::matmul<T>(h, w.head_matrix().data(), logits.mutable_data(), n, d,
                     c.vocab_size);
  cache->len_ = p0 + n;
  logits.check_finite("logits");
  return logits;
}

Batch Batch::row_batch(std::size_t b) const {
  if (b >= batch_size) throw IndexError("batch row " + std::to_string(b) + " out of range");
  Batch out;
  out.batch_size = 1;
  out.seq_len = seq_len;
  auto in = input_row(b);
  auto tg = target_row(b);
  out.inputs.assign(in.begin(), in.end());
  out.targets.assign(tg.begin(), tg.end());
  return out;
}

namespace {

void check_batch(const ModelConfig& c, const Batch& batch) {
  if (batch.batch_size == 0 || batch.seq_len == 0) throw UsageError("empty batch");
  if (batch.inputs.size() != batch.batch_size * batch.seq_len ||
      batch.targets.size() != batch.inputs.size()) {
    throw DimensionError("batch arrays do not match " + std::to_string(batch.batch_size) +
                         "x" + std::to_string(batch.seq_len));
  }
  if (batch.seq_len > c.max_context) {
    throw CapacityError("batch sequence length " + std::to_string(batch.seq_len) +
                        " exceeds max_context " + std::to_string(c.max_context));
  }
}

}  // namespace

template <class T>
double loss_on_batch(const Model<T>& model, const Batch& batch) {
  check_batch(model.config(), batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const auto logits = forward_logits(model, batch.input_row(b));
    const auto targets = batch.target_row(b);
    for (std::size_t t = 0; t < batch.seq_len; ++t) {
      if (targets[t] >= model.config().vocab_size) {
        throw IndexError("target id " + std::to_string(targets[t]) + " out of range");
      }
      auto row = logits.row(t);
      double mx = row[0];
      for (T v : row) mx = std::max(mx, double(v));
      double sum = 0.0;
      for (T v : row) sum += std::exp(double(v) - mx);
      total += mx + std::log(sum) - double(row[targets[t]]);
    }
  }
  return total;
}

template <class T>
Var<T> traced_logits(Tape<T>& tape, const Model<T>& model,
                     std::span<const Token> tokens, std::size_t batch,
                     std::size_t seq, std::vector<Var<T>>* param_vars) {
  const auto& c = model.config();
  const auto& w = model.weights();
  const auto& layout = w.layout();
  check_tokens<T>(c, tokens);
  if (tokens.size() != batch * seq) {
    throw DimensionError("traced_logits: " + std::to_string(tokens.size()) +
                         " tokens for batch " + std::to_string(batch) + "x" +
                         std::to_string(seq));
  }
  if (seq > c.max_context) throw CapacityError("sequence longer than max_context");

  std::vector<Var<T>> params;
  params.reserve(layout.count());
  for (ParamId id = 0; id < layout.count(); ++id) params.push_back(tape.parameter(id, w.param(id)));

  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  std::vector<std::size_t> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % seq;
  Var<T> x = ad::add(ad::embedding(params[layout.token_embedding()], std::span<const std::size_t>(ids)),
                     ad::embedding(params[layout.position_embedding()],
                                   std::span<const std::size_t>(positions)));
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    const SublayerId attn_id{l, SublayerKind::kAttention};
    if (model.mask().active(attn_id)) {
      auto p = [&](ParamLayout::Slot s) { return params[layout.sublayer_param(attn_id, s)]; };
      Var<T> h = ad::layer_norm(x, p(ParamLayout::kLnGamma), p(ParamLayout::kLnBeta));
      Var<T> qkv = ad::add_bias(ad::matmul(h, p(ParamLayout::kWIn)), p(ParamLayout::kBIn));
      Var<T> a = ad::causal_attention(qkv, batch, seq, c.n_heads);
      Var<T> o = ad::add_bias(ad::matmul(a, p(ParamLayout::kWOut)), p(ParamLayout::kBOut));
      x = ad::add(x, o);
    }
    const SublayerId ffn_id{l, SublayerKind::kFfn};
    if (model.mask().active(ffn_id)) {
      auto p = [&](ParamLayout::Slot s) { return params[layout.sublayer_param(ffn_id, s)]; };
      Var<T> h = ad::layer_norm(x, p(ParamLayout::kLnGamma), p(ParamLayout::kLnBeta));
      Var<T> u = ad::gelu(ad::add_bias(ad::matmul(h, p(ParamLayout::kWIn)), p(ParamLayout::kBIn)));
      Var<T> o = ad::add_bias(ad::matmul(u, p(ParamLayout::kWOut)), p(ParamLayout::kBOut));
      x = ad::add(x, o);
    }
  }
  x = ad::layer_norm(x, params[layout.final_ln_gamma()], params[layout.final_ln_beta()]);
  Var<T> logits = ad::matmul_bt(x, params[layout.token_embedding()]);
  if (param_vars) *param_vars = std::move(params);
  return logits;
}

template <class T>
LossAndGrad<T> loss_and_gradients(const Model<T>& model, const Batch& batch,
                                  T loss_scale) {
  check_batch(model.config(), batch);
  Tape<T> tape;
  Var<T> logits = traced_logits(tape, model, batch.inputs, batch.batch_size, batch.seq_len);
  std::vector<std::size_t> targets(batch.targets.begin(), batch.targets.end());
  Var<T> loss = ad::cross_entropy(logits, std::span<const std::size_t>(targets));
  LossAndGrad<T> out;
  out.loss = double(loss.value()[0]);
  Var<T> scaled = loss_scale == T(1) ? loss : ad::scale(loss, loss_scale);
  out.grads = tape.backward(scaled);
  return out;
}

#define SDFP_INSTANTIATE_MODEL(T)                                                 \
  template class Weights<T>;                                                      \
  template class KvCache<T>;                                                      \
  template class Model<T>;                                                        \
  template Model<T> init_model<T>(const ModelConfig&);                            \
  template Tensor<T> forward_logits<T>(const Model<T>&, std::span<const Token>,   \
                                       KvCache<T>*);                              \
  template double loss_on_batch<T>(const Model<T>&, const Batch&);                \
  template Var<T> traced_logits<T>(Tape<T>&, const Model<T>&,                     \
                                   std::span<const Token>, std::size_t,           \
                                   std::size_t, std::vector<Var<T>>*);            \
  template LossAndGrad<T> loss_and_gradients<T>(const Model<T>&, const Batch&, T);

SDFP_INSTANTIATE_MODEL(float)
SDFP_INSTANTIATE_MODEL(double)

#undef SDFP_INSTANTIATE_MODEL

}  // namespace sdfp
