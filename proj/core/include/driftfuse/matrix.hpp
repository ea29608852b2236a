#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace driftfuse {

/// Dense row-major matrix of doubles.
///
/// Every kernel in the engine (layer weights, activations, QR factors,
/// fusion masks) is stored in this type. Shape errors are reported with
/// ShapeError; element access is unchecked.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

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

  void fill(double v);

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class DiffMode { scalar, elementwise };

Matrix transpose(const Matrix& a);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a * bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// aᵀ * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// Horizontal concatenation [a b]; row counts must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);
// Columns [begin, begin + count).
Matrix column_block(const Matrix& a, std::size_t begin, std::size_t count);

double frobenius_norm(const Matrix& a);

/// Scalar mode: 1x1 matrix holding sqrt(sum (a-b)^2).
/// Elementwise mode: |a_ij - b_ij| with a's shape.
Matrix frobenius_diff(const Matrix& a, const Matrix& b, DiffMode mode);

double max_abs(const Matrix& a);

double clamp01(double x);
Matrix clamp01(const Matrix& a);

bool all_finite(const Matrix& a) noexcept;
bool all_finite(std::span<const double> v) noexcept;

}  // namespace driftfuse
