#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace unidg {

/// Dense row-major matrix of doubles. Features, weights and gradients are all
/// carried as Tensor2; a 1×n tensor stands in for a row vector when needed.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Literal construction for tests and small fixtures: {{1, 2}, {3, 4}}.
  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_transpose_a(const Tensor2& a, const Tensor2& b);  // aᵀ·b
Tensor2 matmul_transpose_b(const Tensor2& a, const Tensor2& b);  // a·bᵀ
Tensor2 transpose(const Tensor2& a);
Tensor2 operator+(const Tensor2& a, const Tensor2& b);
Tensor2 operator-(const Tensor2& a, const Tensor2& b);
Tensor2 operator*(double s, const Tensor2& a);
Tensor2& operator+=(Tensor2& a, const Tensor2& b);

/// Selects the listed rows, in order.
Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> indices);

std::vector<double> column_sums(const Tensor2& a);
bool all_finite(const Tensor2& a) noexcept;
bool all_finite(std::span<const double> a) noexcept;

}  // namespace unidg
