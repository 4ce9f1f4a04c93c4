#pragma once

#include <cstddef>
#include <span>

// Raw dense kernels shared by the untraced inference path and the traced ops.
//
// Every kernel computes each output row with the same instruction sequence no
// matter how many rows are in the call, so a row's result is bitwise
// independent of batching. Incremental and block decoding rely on this.
namespace sdfp::kernels {

inline constexpr double kLayerNormEps = 1e-5;

// out[m x n] = a[m x k] * b[k x n]
template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> out,
            std::size_t m, std::size_t k, std::size_t n);

// out[m x n] += a[m x k] * b[k x n]
template <class T>
void matmul_accumulate(std::span<const T> a, std::span<const T> b,
                       std::span<T> out, std::size_t m, std::size_t k,
                       std::size_t n);

// out[k x n] += a[m x k]^T * b[m x n]
template <class T>
void matmul_at_accumulate(std::span<const T> a, std::span<const T> b,
                          std::span<T> out, std::size_t m, std::size_t k,
                          std::size_t n);

// out[n x m] = in[m x n]^T
template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t m,
               std::size_t n);

// Adds bias[n] to every row of x[m x n].
template <class T>
void add_row_bias(std::span<T> x, std::span<const T> bias, std::size_t m,
                  std::size_t n);

// Row-wise layer norm. `mean` and `rstd` (length m) are optional outputs.
template <class T>
void layer_norm(std::span<const T> x, std::span<const T> gamma,
                std::span<const T> beta, std::span<T> out, std::size_t m,
                std::size_t n, std::span<T> mean = {}, std::span<T> rstd = {});

// tanh-approximated GELU and its derivative. In single precision tanh and
// exp come from a polynomial rather than libm so the array forms vectorize.
template <class T>
T gelu(T x);
template <class T>
T gelu_grad(T x);
template <class T>
void gelu_inplace(std::span<T> x);
// dx += g * gelu'(x)
template <class T>
void gelu_backward_accumulate(std::span<const T> x, std::span<const T> g,
                              std::span<T> dx);

// In-place numerically stable softmax of one row.
template <class T>
void softmax_inplace(std::span<T> row);

}  // namespace sdfp::kernels
