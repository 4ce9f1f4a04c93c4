#include "sdfp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

namespace sdfp::kernels {

namespace {

// Register-tiled product over up to kMaxRows rows of A at once, so B is
// streamed once per row tile instead of once per row. Each output element is
// accumulated over p = 0..k-1 in order, starting from its current value, by
// the same code path for every row, so results do not depend on how many
// rows share a tile.
constexpr std::size_t kMaxRows = 8;

template <class T>
struct Vec {
  static constexpr std::size_t kWidth = 64 / sizeof(T);
  typedef T type __attribute__((vector_size(64)));
};

template <class T>
inline typename Vec<T>::type load(const T* p) {
  typename Vec<T>::type v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

template <class T>
inline void store(T* p, typename Vec<T>::type v) {
  __builtin_memcpy(p, &v, sizeof(v));
}

// c[r][j] += sum_p a(r, p) * b[p][j] for r < R, where a(r, p) =
// a[r * a_row + p * a_col].
template <class T, std::size_t R>
void tile(const T* a, std::size_t a_row, std::size_t a_col, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, std::size_t k, std::size_t n) {
  using V = typename Vec<T>::type;
  constexpr std::size_t W = Vec<T>::kWidth;
  std::size_t j = 0;
  for (; j + 2 * W <= n; j += 2 * W) {
    V acc0[R], acc1[R];
    for (std::size_t r = 0; r < R; ++r) {
      acc0[r] = load(c + r * ldc + j);
      acc1[r] = load(c + r * ldc + j + W);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const V b0 = load(b + p * ldb + j);
      const V b1 = load(b + p * ldb + j + W);
      for (std::size_t r = 0; r < R; ++r) {
        const T av = a[r * a_row + p * a_col];
        acc0[r] += av * b0;
        acc1[r] += av * b1;
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      store(c + r * ldc + j, acc0[r]);
      store(c + r * ldc + j + W, acc1[r]);
    }
  }
  for (; j + W <= n; j += W) {
    V acc[R];
    for (std::size_t r = 0; r < R; ++r) acc[r] = load(c + r * ldc + j);
    for (std::size_t p = 0; p < k; ++p) {
      const V b0 = load(b + p * ldb + j);
      for (std::size_t r = 0; r < R; ++r) acc[r] += a[r * a_row + p * a_col] * b0;
    }
    for (std::size_t r = 0; r < R; ++r) store(c + r * ldc + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < R; ++r) {
      T acc = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[r * a_row + p * a_col] * b[p * ldb + j];
      c[r * ldc + j] = acc;
    }
  }
}

template <class T, std::size_t... Rs>
void dispatch_tile(std::size_t rows, std::index_sequence<Rs...>, const T* a,
                   std::size_t a_row, std::size_t a_col, const T* b,
                   std::size_t ldb, T* c, std::size_t ldc, std::size_t k,
                   std::size_t n) {
  ((rows == Rs + 1 ? (tile<T, Rs + 1>(a, a_row, a_col, b, ldb, c, ldc, k, n), 0) : 0), ...);
}

template <class T>
void tiled_product(const T* a, std::size_t a_row, std::size_t a_col, const T* b,
                   T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; i += kMaxRows) {
    const std::size_t rows = std::min(kMaxRows, m - i);
    dispatch_tile<T>(rows, std::make_index_sequence<kMaxRows>{}, a + i * a_row, a_row,
                     a_col, b, n, c + i * n, n, k, n);
  }
}

}  // namespace

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> out,
            std::size_t m, std::size_t k, std::size_t n) {
  std::fill(out.begin(), out.begin() + m * n, T(0));
  matmul_accumulate(a, b, out, m, k, n);
}

template <class T>
void matmul_accumulate(std::span<const T> a, std::span<const T> b,
                       std::span<T> out, std::size_t m, std::size_t k,
                       std::size_t n) {
  tiled_product<T>(a.data(), k, 1, b.data(), out.data(), m, k, n);
}

template <class T>
void matmul_at_accumulate(std::span<const T> a, std::span<const T> b,
                          std::span<T> out, std::size_t m, std::size_t k,
                          std::size_t n) {
  // out[i][j] += sum_r a[r][i] * b[r][j]: row i of A^T is column i of A.
  tiled_product<T>(a.data(), 1, k, b.data(), out.data(), k, m, n);
}

template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t m,
               std::size_t n) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t i1 = std::min(m, i0 + kBlock);
      const std::size_t j1 = std::min(n, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
    }
  }
}

template <class T>
void add_row_bias(std::span<T> x, std::span<const T> bias, std::size_t m,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* row = x.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
  }
}

template <class T>
void layer_norm(std::span<const T> x, std::span<const T> gamma,
                std::span<const T> beta, std::span<T> out, std::size_t m,
                std::size_t n, std::span<T> mean, std::span<T> rstd) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* xr = x.data() + i * n;
    T* yr = out.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = xr[j] - mu;
      var += d * d;
    }
    var /= T(n);
    const T rs = T(1) / std::sqrt(var + T(kLayerNormEps));
    for (std::size_t j = 0; j < n; ++j)
      yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    if (!mean.empty()) mean[i] = mu;
    if (!rstd.empty()) rstd[i] = rs;
  }
}

namespace {
template <class T>
constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2/pi)
template <class T>
constexpr T kGeluA = T(0.044715);

// Single precision exp by Cody-Waite reduction and a polynomial (relative
// error about 2e-7), on 16 lanes at a time. glibc's expf and tanhf do not
// vectorize, and they dominated decode time.
using F16 = float __attribute__((vector_size(64)));
using I16 = std::int32_t __attribute__((vector_size(64)));

inline F16 splat(float v) { return F16{} + v; }

inline F16 exp_f16(F16 x) {
  x = x < splat(-87.0f) ? splat(-87.0f) : x;
  x = x > splat(88.0f) ? splat(88.0f) : x;
  const F16 t = x * 1.44269504088896341f + 0.5f;
  F16 n = __builtin_convertvector(__builtin_convertvector(t, I16), F16);
  n = n > t ? n - 1.0f : n;  // floor
  F16 r = x - n * 0.693359375f;
  r = r + n * 2.12194440e-4f;
  F16 y = splat(1.9875691500e-4f);
  y = y * r + 1.3981999507e-3f;
  y = y * r + 8.3334519073e-3f;
  y = y * r + 4.1665795894e-2f;
  y = y * r + 1.6666665459e-1f;
  y = y * r + 5.0000001201e-1f;
  y = y * r * r + r + 1.0f;
  const I16 bits = (__builtin_convertvector(n, I16) + 127) << 23;
  F16 scale;
  __builtin_memcpy(&scale, &bits, sizeof scale);
  return y * scale;
}

// Absolute error about 2e-7, which is what (1 + tanh) and (1 - tanh^2) in
// the GELU formulas need.
inline F16 tanh_f16(F16 x) {
  x = x < splat(-9.0f) ? splat(-9.0f) : x;
  x = x > splat(9.0f) ? splat(9.0f) : x;
  return 1.0f - 2.0f / (exp_f16(2.0f * x) + 1.0f);
}

// Applies f to every element through the 16-lane path, the tail included
// (padded), so an element's result never depends on where it sits.
template <class F>
inline void map_f16(const float* in, float* out, std::size_t n, F f) {
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    F16 v;
    __builtin_memcpy(&v, in + i, sizeof v);
    v = f(v);
    __builtin_memcpy(out + i, &v, sizeof v);
  }
  if (i < n) {
    F16 v = splat(0.0f);
    __builtin_memcpy(&v, in + i, (n - i) * sizeof(float));
    v = f(v);
    __builtin_memcpy(out + i, &v, (n - i) * sizeof(float));
  }
}

inline F16 gelu_f16(F16 x) {
  const F16 inner = kGeluC<float> * (x + kGeluA<float> * x * x * x);
  return 0.5f * x * (1.0f + tanh_f16(inner));
}

inline F16 gelu_grad_f16(F16 x) {
  const F16 inner = kGeluC<float> * (x + kGeluA<float> * x * x * x);
  const F16 t = tanh_f16(inner);
  const F16 dinner = kGeluC<float> * (1.0f + 3.0f * kGeluA<float> * x * x);
  return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * dinner;
}

template <class T>
inline T gelu_one(T x) {
  const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <class T>
inline T gelu_grad_one(T x) {
  const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

}  // namespace

template <class T>
T gelu(T x) {
  if constexpr (std::is_same_v<T, float>) {
    map_f16(&x, &x, 1, gelu_f16);
    return x;
  } else {
    return gelu_one(x);
  }
}

template <class T>
T gelu_grad(T x) {
  if constexpr (std::is_same_v<T, float>) {
    map_f16(&x, &x, 1, gelu_grad_f16);
    return x;
  } else {
    return gelu_grad_one(x);
  }
}

template <class T>
void gelu_inplace(std::span<T> x) {
  if constexpr (std::is_same_v<T, float>) {
    map_f16(x.data(), x.data(), x.size(), gelu_f16);
  } else {
    for (auto& v : x) v = gelu_one(v);
  }
}

template <class T>
void gelu_backward_accumulate(std::span<const T> x, std::span<const T> g,
                              std::span<T> dx) {
  const std::size_t n = x.size();
  if constexpr (std::is_same_v<T, float>) {
    std::vector<float> d(n);
    map_f16(x.data(), d.data(), n, gelu_grad_f16);
    for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * d[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * gelu_grad_one(x[i]);
  }
}

template <class T>
void softmax_inplace(std::span<T> row) {
  const std::size_t n = row.size();
  if (n == 0) return;
  T* p = row.data();
  T mx = p[0];
  for (std::size_t i = 1; i < n; ++i) mx = p[i] > mx ? p[i] : mx;
  if constexpr (std::is_same_v<T, float>) {
    map_f16(p, p, n, [mx](F16 v) { return exp_f16(v - mx); });
  } else {
    for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(p[i] - mx);
  }
  // Fixed lane-wise partial sums: the order depends only on n.
  constexpr std::size_t kLanes = 16;
  T part[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) part[l] += p[i + l];
  T sum = 0;
  for (std::size_t l = 0; l < kLanes; ++l) sum += part[l];
  for (; i < n; ++i) sum += p[i];
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) p[j] *= inv;
}

#define SDFP_INSTANTIATE(T)                                                   \
  template void matmul<T>(std::span<const T>, std::span<const T>,             \
                          std::span<T>, std::size_t, std::size_t,             \
                          std::size_t);                                       \
  template void matmul_accumulate<T>(std::span<const T>, std::span<const T>,  \
                                     std::span<T>, std::size_t, std::size_t,  \
                                     std::size_t);                            \
  template void matmul_at_accumulate<T>(std::span<const T>,                   \
                                        std::span<const T>, std::span<T>,     \
                                        std::size_t, std::size_t,             \
                                        std::size_t);                         \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t,   \
                             std::size_t);                                    \
  template void add_row_bias<T>(std::span<T>, std::span<const T>,             \
                                std::size_t, std::size_t);                    \
  template void layer_norm<T>(std::span<const T>, std::span<const T>,         \
                              std::span<const T>, std::span<T>, std::size_t,  \
                              std::size_t, std::span<T>, std::span<T>);       \
  template T gelu<T>(T);                                                      \
  template T gelu_grad<T>(T);                                                 \
  template void gelu_inplace<T>(std::span<T>);                                \
  template void gelu_backward_accumulate<T>(std::span<const T>,               \
                                            std::span<const T>, std::span<T>); \
  template void softmax_inplace<T>(std::span<T>);

SDFP_INSTANTIATE(float)
SDFP_INSTANTIATE(double)

#undef SDFP_INSTANTIATE

}  // namespace sdfp::kernels
