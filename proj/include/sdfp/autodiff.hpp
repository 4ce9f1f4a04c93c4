#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "sdfp/tensor.hpp"

namespace sdfp {

using ParamId = std::size_t;

// Gradients keyed by parameter id. Every parameter registered on the tape has
// an entry; parameters the loss does not depend on hold zeros.
template <class T>
class GradientRecord {
 public:
  void set(ParamId id, Tensor<T> grad) { grads_.insert_or_assign(id, std::move(grad)); }
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  const Tensor<T>& at(ParamId id) const;
  const std::map<ParamId, Tensor<T>>& entries() const { return grads_; }
  std::size_t size() const { return grads_.size(); }

  // Sum of squared entries over the given parameters, accumulated in double.
  double squared_norm(std::span<const ParamId> ids) const;

 private:
  std::map<ParamId, Tensor<T>> grads_;
};

template <class T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid while the
// tape it came from is alive.
template <class T>
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t index() const { return index_; }
  Tape<T>* tape() const { return tape_; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape<T>* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Reverse-mode gradient tape. Single-threaded; concurrent traces each own a
// tape. With tracing off, ops still compute values but record no backward
// closures, and backward() on their results is a usage error.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  explicit Tape(bool tracing = true) : tracing_(tracing) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracing() const { return tracing_; }
  void set_tracing(bool on) { tracing_ = on; }

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(ParamId id, Tensor<T> value);

  // Gradient of a scalar (single-element) output.
  GradientRecord<T> backward(Var<T> loss);
  // Vector-Jacobian product for an arbitrary output; the tape is left intact
  // so this may be called repeatedly after one forward pass.
  GradientRecord<T> vjp(Var<T> output, const Tensor<T>& cotangent);

  std::size_t size() const { return nodes_.size(); }

  // Op-implementation interface.
  Var<T> record(const char* op, Tensor<T> value,
                std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor<T>& value(std::size_t node) const { return nodes_[node].value; }
  Tensor<T>& grad(std::size_t node);
  bool needs_grad(std::size_t node) const { return nodes_[node].needs_grad; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool traced = false;
    bool needs_grad = false;
    bool is_param = false;
    ParamId param_id = 0;
  };

  void check_owned(const Var<T>& v, const char* what) const;

  std::vector<Node> nodes_;
  std::map<ParamId, std::size_t> params_;
  bool tracing_;
};

// Differentiable ops. Inputs must come from the same tape.
namespace ad {

template <class T> Var<T> matmul(Var<T> a, Var<T> b);
// a[m x k] * b[n x k]^T
template <class T> Var<T> matmul_bt(Var<T> a, Var<T> b);
template <class T> Var<T> add(Var<T> a, Var<T> b);
// x[m x n] + bias[n] broadcast over rows
template <class T> Var<T> add_bias(Var<T> x, Var<T> bias);
template <class T> Var<T> scale(Var<T> x, T factor);
template <class T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta);
template <class T> Var<T> gelu(Var<T> x);
// Softmax along the last axis.
template <class T> Var<T> softmax(Var<T> x);
// Rows of table[V x D] selected by ids.
template <class T>
Var<T> embedding(Var<T> table, std::span<const std::size_t> ids);
// Multi-head causal self-attention over `batch` independent sequences of
// length `seq`. qkv is [batch*seq x 3*d] laid out as [q | k | v].
template <class T>
Var<T> causal_attention(Var<T> qkv, std::size_t batch, std::size_t seq,
                        std::size_t n_heads);
// Summed next-token cross-entropy: sum_i (logsumexp(z_i) - z_i[target_i]).
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets);
template <class T> Var<T> sum(Var<T> x);
template <class T> Var<T> sum_squares(Var<T> x);
// One row of a 2-D tensor as a [1 x n] tensor.
template <class T> Var<T> select_row(Var<T> x, std::size_t row);

}  // namespace ad

extern template class GradientRecord<float>;
extern template class GradientRecord<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace sdfp
