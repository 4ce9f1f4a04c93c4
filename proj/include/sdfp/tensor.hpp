#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "sdfp/errors.hpp"

namespace sdfp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor. Plain value type: copies are deep, and a tensor
// handed to another thread through a const reference is never mutated.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }
  // Convenience for tests: a 2-D tensor from nested rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> mutable_data() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T at(std::size_t row, std::size_t col) const;

  // Rows of a 2-D tensor.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }
  std::span<const T> row(std::size_t r) const;
  std::span<T> mutable_row(std::size_t r);

  Tensor reshaped(Shape shape) const;

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  // Throws NumericError naming `what` on the first NaN/Inf.
  void check_finite(const std::string& what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace sdfp
