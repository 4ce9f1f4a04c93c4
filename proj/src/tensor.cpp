#include "sdfp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace sdfp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kBench: return "bench";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) +
                         " elements, got " + std::to_string(data_.size()));
  }
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  std::vector<T> data(shape_numel(shape), T(0));
  return Tensor(std::move(shape), std::move(data));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  std::vector<T> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

template <class T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(n_rows * n_cols);
  for (const auto& r : rows) {
    if (r.size() != n_cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({n_rows, n_cols}, std::move(data));
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

template <class T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= shape_[0] || c >= shape_[1]) {
    throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_str(shape_));
  }
  return data_[r * shape_[1] + c];
}

template <class T>
std::span<const T> Tensor<T>::row(std::size_t r) const {
  if (rank() != 2) throw DimensionError("row() needs a 2-D tensor");
  if (r >= shape_[0]) throw IndexError("row " + std::to_string(r) + " out of range");
  return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
}

template <class T>
std::span<T> Tensor<T>::mutable_row(std::size_t r) {
  if (rank() != 2) throw DimensionError("mutable_row() needs a 2-D tensor");
  if (r >= shape_[0]) throw IndexError("row " + std::to_string(r) + " out of range");
  return std::span<T>(data_).subspan(r * shape_[1], shape_[1]);
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <class T>
void Tensor<T>::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite value in " + what + " at element " +
                         std::to_string(i));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace sdfp
