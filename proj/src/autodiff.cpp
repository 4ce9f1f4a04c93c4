#include "sdfp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdfp/kernels.hpp"

namespace sdfp {

template <class T>
const Tensor<T>& GradientRecord<T>::at(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw IndexError("no gradient recorded for parameter " + std::to_string(id));
  }
  return it->second;
}

template <class T>
double GradientRecord<T>::squared_norm(std::span<const ParamId> ids) const {
  double total = 0.0;
  for (ParamId id : ids) {
    for (T g : at(id).data()) total += double(g) * double(g);
  }
  return total;
}

template <class T>
const Tensor<T>& Var<T>::value() const {
  if (!tape_) throw UsageError("value() on an empty Var");
  return tape_->value(index_);
}

template <class T>
void Tape<T>::check_owned(const Var<T>& v, const char* what) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw UsageError(std::string(what) + ": value does not belong to this tape");
  }
}

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record("constant", std::move(value), {}, nullptr);
}

template <class T>
Var<T> Tape<T>::parameter(ParamId id, Tensor<T> value) {
  if (params_.count(id)) {
    throw UsageError("parameter " + std::to_string(id) + " registered twice");
  }
  value.check_finite("parameter " + std::to_string(id));
  Node node;
  node.value = std::move(value);
  node.traced = tracing_;
  node.needs_grad = tracing_;
  node.is_param = true;
  node.param_id = id;
  nodes_.push_back(std::move(node));
  params_[id] = nodes_.size() - 1;
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value,
                       std::vector<std::size_t> inputs, BackwardFn backward) {
  value.check_finite(op);
  Node node;
  node.value = std::move(value);
  node.traced = tracing_;
  if (tracing_) {
    for (auto i : inputs) node.needs_grad = node.needs_grad || nodes_[i].needs_grad;
    if (node.needs_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Tensor<T>& Tape<T>::grad(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
  return n.grad;
}

template <class T>
GradientRecord<T> Tape<T>::backward(Var<T> loss) {
  check_owned(loss, "backward");
  if (value(loss.index_).size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " +
                     shape_str(value(loss.index_).shape()));
  }
  return vjp(loss, Tensor<T>::full(value(loss.index_).shape(), T(1)));
}

template <class T>
GradientRecord<T> Tape<T>::vjp(Var<T> output, const Tensor<T>& cotangent) {
  check_owned(output, "vjp");
  const std::size_t root = output.index_;
  if (!nodes_[root].traced) {
    throw UsageError("backward on a value produced while tracing was off");
  }
  if (cotangent.shape() != nodes_[root].value.shape()) {
    throw DimensionError("cotangent shape " + shape_str(cotangent.shape()) +
                         " does not match output " +
                         shape_str(nodes_[root].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (nodes_[root].needs_grad) {
    nodes_[root].grad = cotangent;
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }
  GradientRecord<T> record;
  for (const auto& [id, idx] : params_) {
    Node& n = nodes_[idx];
    record.set(id, n.grad.empty() ? Tensor<T>::zeros(n.value.shape()) : n.grad);
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  return record;
}

namespace ad {
namespace {

template <class T>
Tape<T>& same_tape(std::initializer_list<Var<T>> vars, const char* op) {
  Tape<T>* tape = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw UsageError(std::string(op) + ": empty input");
    if (tape && v.tape() != tape) {
      throw UsageError(std::string(op) + ": inputs from different tapes");
    }
    tape = v.tape();
  }
  return *tape;
}

template <class T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D input, got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape({a, b}, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  auto out = Tensor<T>::zeros({m, n});
  kernels::matmul<T>(av.data(), bv.data(), out.mutable_data(), m, k, n);
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record("matmul", std::move(out), {ia, ib},
                     [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) {
      // dA = G * B^T
      std::vector<T> bt(k * n);
      kernels::transpose<T>(t.value(ib).data(), bt, k, n);
      kernels::matmul_accumulate<T>(g.data(), bt, t.grad(ia).mutable_data(), m, n, k);
    }
    if (t.needs_grad(ib)) {
      // dB = A^T * G
      kernels::matmul_at_accumulate<T>(t.value(ia).data(), g.data(),
                                       t.grad(ib).mutable_data(), m, k, n);
    }
  });
}

template <class T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape({a, b}, "matmul_bt");
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2(av, "matmul_bt");
  require_rank2(bv, "matmul_bt");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) {
    throw DimensionError("matmul_bt: inner dimensions differ, " +
                         shape_str(av.shape()) + " x " + shape_str(bv.shape()) + "^T");
  }
  std::vector<T> bt(k * n);
  kernels::transpose<T>(bv.data(), bt, n, k);
  auto out = Tensor<T>::zeros({m, n});
  kernels::matmul<T>(av.data(), bt, out.mutable_data(), m, k, n);
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record("matmul_bt", std::move(out), {ia, ib},
                     [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) {
      // dA = G * B
      kernels::matmul_accumulate<T>(g.data(), t.value(ib).data(),
                                    t.grad(ia).mutable_data(), m, n, k);
    }
    if (t.needs_grad(ib)) {
      // dB = G^T * A
      kernels::matmul_at_accumulate<T>(g.data(), t.value(ia).data(),
                                       t.grad(ib).mutable_data(), m, n, k);
    }
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape({a, b}, "add");
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  auto od = out.mutable_data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record("add", std::move(out), {ia, ib},
                     [ia, ib](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    for (std::size_t in : {ia, ib}) {
      if (!t.needs_grad(in)) continue;
      auto d = t.grad(in).mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  Tape<T>& tape = same_tape({x, bias}, "add_bias");
  require_rank2(x.value(), "add_bias");
  const std::size_t m = x.value().dim(0), n = x.value().dim(1);
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias of " + shape_str(bias.shape()) +
                         " for rows of width " + std::to_string(n));
  }
  Tensor<T> out = x.value();
  kernels::add_row_bias<T>(out.mutable_data(), bias.value().data(), m, n);
  const std::size_t ix = x.index(), ib = bias.index();
  return tape.record("add_bias", std::move(out), {ix, ib},
                     [ix, ib, m, n](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    if (t.needs_grad(ix)) {
      auto d = t.grad(ix).mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.grad(ib).mutable_data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  Tape<T>& tape = same_tape({x}, "scale");
  Tensor<T> out = x.value();
  for (auto& v : out.mutable_data()) v *= factor;
  const std::size_t ix = x.index();
  return tape.record("scale", std::move(out), {ix},
                     [ix, factor](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ix).mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta) {
  Tape<T>& tape = same_tape({x, gamma, beta}, "layer_norm");
  require_rank2(x.value(), "layer_norm");
  const std::size_t m = x.value().dim(0), n = x.value().dim(1);
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw DimensionError("layer_norm: affine parameters must have " +
                         std::to_string(n) + " elements");
  }
  auto out = Tensor<T>::zeros({m, n});
  std::vector<T> mean(m), rstd(m);
  kernels::layer_norm<T>(x.value().data(), gamma.value().data(),
                         beta.value().data(), out.mutable_data(), m, n, mean, rstd);
  const std::size_t ix = x.index(), ig = gamma.index(), ib = beta.index();
  return tape.record("layer_norm", std::move(out), {ix, ig, ib},
                     [ix, ig, ib, m, n, mean = std::move(mean),
                      rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto xv = t.value(ix).data();
    const auto gv = t.value(ig).data();
    std::vector<T> xhat(n), dxhat(n);
    for (std::size_t i = 0; i < m; ++i) {
      const T* gr = g.data() + i * n;
      const T* xr = xv.data() + i * n;
      T sum_d = 0, sum_dx = 0;
      for (std::size_t j = 0; j < n; ++j) {
        xhat[j] = (xr[j] - mean[i]) * rstd[i];
        dxhat[j] = gr[j] * gv[j];
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * xhat[j];
      }
      if (t.needs_grad(ig)) {
        auto dg = t.grad(ig).mutable_data();
        for (std::size_t j = 0; j < n; ++j) dg[j] += gr[j] * xhat[j];
      }
      if (t.needs_grad(ib)) {
        auto db = t.grad(ib).mutable_data();
        for (std::size_t j = 0; j < n; ++j) db[j] += gr[j];
      }
      if (t.needs_grad(ix)) {
        T* dx = t.grad(ix).mutable_data().data() + i * n;
        const T inv_n = T(1) / T(n);
        for (std::size_t j = 0; j < n; ++j) {
          dx[j] += rstd[i] * (dxhat[j] - sum_d * inv_n - xhat[j] * sum_dx * inv_n);
        }
      }
    }
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Tape<T>& tape = same_tape({x}, "gelu");
  Tensor<T> out = x.value();
  kernels::gelu_inplace<T>(out.mutable_data());
  const std::size_t ix = x.index();
  return tape.record("gelu", std::move(out), {ix},
                     [ix](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto xv = t.value(ix).data();
    auto d = t.grad(ix).mutable_data();
    kernels::gelu_backward_accumulate<T>(xv, g, d);
  });
}

template <class T>
Var<T> softmax(Var<T> x) {
  Tape<T>& tape = same_tape({x}, "softmax");
  if (x.value().rank() == 0 || x.value().empty()) {
    throw DimensionError("softmax: empty input");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    kernels::softmax_inplace<T>(out.mutable_data().subspan(r * n, n));
  const std::size_t ix = x.index();
  return tape.record("softmax", std::move(out), {ix},
                     [ix, rows, n](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto y = t.value(self).data();
    auto d = t.grad(ix).mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        d[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

template <class T>
Var<T> embedding(Var<T> table, std::span<const std::size_t> ids) {
  Tape<T>& tape = same_tape({table}, "embedding");
  require_rank2(table.value(), "embedding");
  const std::size_t vocab = table.value().dim(0), d = table.value().dim(1);
  auto out = Tensor<T>::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) +
                       " out of range for table of " + std::to_string(vocab) + " rows");
    }
    auto src = table.value().row(ids[i]);
    std::copy(src.begin(), src.end(), out.mutable_row(i).begin());
  }
  const std::size_t it = table.index();
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return tape.record("embedding", std::move(out), {it},
                     [it, d, saved = std::move(saved)](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto dt = t.grad(it).mutable_data();
    for (std::size_t i = 0; i < saved.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dt[saved[i] * d + j] += g[i * d + j];
  });
}

template <class T>
Var<T> causal_attention(Var<T> qkv, std::size_t batch, std::size_t seq,
                        std::size_t n_heads) {
  Tape<T>& tape = same_tape({qkv}, "causal_attention");
  require_rank2(qkv.value(), "causal_attention");
  const std::size_t width = qkv.value().dim(1);
  if (qkv.value().dim(0) != batch * seq || width % 3 != 0 ||
      (width / 3) % n_heads != 0) {
    throw DimensionError("causal_attention: qkv " + shape_str(qkv.shape()) +
                         " inconsistent with batch=" + std::to_string(batch) +
                         " seq=" + std::to_string(seq) +
                         " heads=" + std::to_string(n_heads));
  }
  const std::size_t d = width / 3;
  const std::size_t hd = d / n_heads;
  const T inv_sqrt = T(1) / std::sqrt(T(hd));
  const auto in = qkv.value().data();
  auto out = Tensor<T>::zeros({batch * seq, d});
  auto od = out.mutable_data();
  // probs[b][h][t][s] for s <= t. Keys and values are gathered per head into
  // transposed [hd x seq] buffers so the inner loops run over positions.
  std::vector<T> probs(batch * n_heads * seq * seq, T(0));
  std::vector<T> kt(hd * seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t s = 0; s < seq; ++s) {
        const T* k = in.data() + (b * seq + s) * width + d + h * hd;
        for (std::size_t e = 0; e < hd; ++e) kt[e * seq + s] = k[e];
      }
      for (std::size_t tq = 0; tq < seq; ++tq) {
        const T* q = in.data() + (b * seq + tq) * width + h * hd;
        T* p = probs.data() + ((b * n_heads + h) * seq + tq) * seq;
        for (std::size_t e = 0; e < hd; ++e) {
          const T qe = q[e];
          const T* kr = kt.data() + e * seq;
          for (std::size_t s = 0; s <= tq; ++s) p[s] += qe * kr[s];
        }
        for (std::size_t s = 0; s <= tq; ++s) p[s] *= inv_sqrt;
        kernels::softmax_inplace<T>(std::span<T>(p, tq + 1));
        T* o = od.data() + (b * seq + tq) * d + h * hd;
        for (std::size_t s = 0; s <= tq; ++s) {
          const T* v = in.data() + (b * seq + s) * width + 2 * d + h * hd;
          const T ps = p[s];
          for (std::size_t e = 0; e < hd; ++e) o[e] += ps * v[e];
        }
      }
    }
  }
  const std::size_t ix = qkv.index();
  return tape.record(
      "causal_attention", std::move(out), {ix},
      [ix, batch, seq, n_heads, d, hd, width, inv_sqrt,
       probs = std::move(probs)](Tape<T>& t, std::size_t self) {
        const auto g = t.grad(self).data();
        const auto in = t.value(ix).data();
        auto din = t.grad(ix).mutable_data();
        std::vector<T> dp(seq), vt(hd * seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t s = 0; s < seq; ++s) {
              const T* v = in.data() + (b * seq + s) * width + 2 * d + h * hd;
              for (std::size_t e = 0; e < hd; ++e) vt[e * seq + s] = v[e];
            }
            for (std::size_t tq = 0; tq < seq; ++tq) {
              const T* p = probs.data() + ((b * n_heads + h) * seq + tq) * seq;
              const T* go = g.data() + (b * seq + tq) * d + h * hd;
              std::fill(dp.begin(), dp.begin() + tq + 1, T(0));
              for (std::size_t e = 0; e < hd; ++e) {
                const T ge = go[e];
                const T* vr = vt.data() + e * seq;
                for (std::size_t s = 0; s <= tq; ++s) dp[s] += ge * vr[s];
              }
              T dot = 0;
              for (std::size_t s = 0; s <= tq; ++s) {
                T* dv = din.data() + (b * seq + s) * width + 2 * d + h * hd;
                const T ps = p[s];
                for (std::size_t e = 0; e < hd; ++e) dv[e] += ps * go[e];
                dot += ps * dp[s];
              }
              const T* q = in.data() + (b * seq + tq) * width + h * hd;
              T* dq = din.data() + (b * seq + tq) * width + h * hd;
              for (std::size_t s = 0; s <= tq; ++s) {
                const T ds = p[s] * (dp[s] - dot) * inv_sqrt;
                const T* k = in.data() + (b * seq + s) * width + d + h * hd;
                T* dk = din.data() + (b * seq + s) * width + d + h * hd;
                for (std::size_t e = 0; e < hd; ++e) {
                  dq[e] += ds * k[e];
                  dk[e] += ds * q[e];
                }
              }
            }
          }
        }
      });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets) {
  Tape<T>& tape = same_tape({logits}, "cross_entropy");
  require_rank2(logits.value(), "cross_entropy");
  const std::size_t m = logits.value().dim(0), n = logits.value().dim(1);
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  std::vector<T> probs(logits.value().values());
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= n) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(n) + " classes");
    }
    std::span<T> row(probs.data() + i * n, n);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (T v : row) sum += std::exp(v - mx);
    total += (mx - row[targets[i]]) + std::log(sum);
    kernels::softmax_inplace<T>(row);
  }
  const std::size_t il = logits.index();
  std::vector<std::size_t> saved(targets.begin(), targets.end());
  return tape.record("cross_entropy", Tensor<T>::scalar(total), {il},
                     [il, n, probs = std::move(probs),
                      saved = std::move(saved)](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    auto d = t.grad(il).mutable_data();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g * probs[i * n + j];
      d[i * n + saved[i]] -= g;
    }
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = same_tape({x}, "sum");
  T total = 0;
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.index();
  return tape.record("sum", Tensor<T>::scalar(total), {ix},
                     [ix](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad(ix).mutable_data()) v += g;
  });
}

template <class T>
Var<T> sum_squares(Var<T> x) {
  Tape<T>& tape = same_tape({x}, "sum_squares");
  T total = 0;
  for (T v : x.value().data()) total += v * v;
  const std::size_t ix = x.index();
  return tape.record("sum_squares", Tensor<T>::scalar(total), {ix},
                     [ix](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    const auto xv = t.value(ix).data();
    auto d = t.grad(ix).mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += T(2) * g * xv[i];
  });
}

template <class T>
Var<T> select_row(Var<T> x, std::size_t row) {
  Tape<T>& tape = same_tape({x}, "select_row");
  require_rank2(x.value(), "select_row");
  const std::size_t n = x.value().dim(1);
  auto r = x.value().row(row);
  Tensor<T> out({1, n}, std::vector<T>(r.begin(), r.end()));
  const std::size_t ix = x.index();
  return tape.record("select_row", std::move(out), {ix},
                     [ix, row, n](Tape<T>& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ix).mutable_data();
    for (std::size_t j = 0; j < n; ++j) d[row * n + j] += g[j];
  });
}

#define SDFP_INSTANTIATE_OPS(T)                                              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                 \
  template Var<T> matmul_bt<T>(Var<T>, Var<T>);                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                    \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                               \
  template Var<T> scale<T>(Var<T>, T);                                       \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>);                     \
  template Var<T> gelu<T>(Var<T>);                                           \
  template Var<T> softmax<T>(Var<T>);                                        \
  template Var<T> embedding<T>(Var<T>, std::span<const std::size_t>);        \
  template Var<T> causal_attention<T>(Var<T>, std::size_t, std::size_t,      \
                                      std::size_t);                          \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::size_t>);    \
  template Var<T> sum<T>(Var<T>);                                            \
  template Var<T> sum_squares<T>(Var<T>);                                    \
  template Var<T> select_row<T>(Var<T>, std::size_t);

SDFP_INSTANTIATE_OPS(float)
SDFP_INSTANTIATE_OPS(double)

#undef SDFP_INSTANTIATE_OPS

}  // namespace ad

template class GradientRecord<float>;
template class GradientRecord<double>;
template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace sdfp
