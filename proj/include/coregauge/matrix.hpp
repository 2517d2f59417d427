#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coregauge/error.hpp"

namespace coregauge {

// Dense row-major matrix. Small on purpose: the library only needs storage,
// row views and bounds-checked access.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  const T& at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw UsageError("matrix index out of range");
    return (*this)(r, c);
  }
  T& at(std::size_t r, std::size_t c) {
    if (r >= rows_ || c >= cols_) throw UsageError("matrix index out of range");
    return (*this)(r, c);
  }

  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace coregauge
