#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mtpv::nn {

// Dense row-major matrix of doubles. Carrier for every weight tensor and
// activation in the library; vectors are 1×n matrices where a shape is needed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  // Keeps the first n rows; n must not exceed rows().
  void resize_rows(std::size_t n);
  void append_row(std::span<const double> r);

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);

// Rows [first, first + count) as a new matrix.
Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count);

// Rounds every entry to the nearest 32-bit float; weights are stored at that
// precision so checkpoints round-trip exactly.
void round_to_storage(Matrix& m);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace mtpv::nn
