#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace stgcrnn {

/// Dense row-major matrix of doubles. This is the plain value type shared by
/// the graph machinery; differentiable computation wraps the same layout in
/// ad::Tensor.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Mat identity(std::size_t n);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& vec() { return v_; }
  const std::vector<double>& vec() const { return v_; }

  Mat transposed() const;
  bool all_finite() const;
  double max_abs() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

/// c = a * b
Mat matmul(const Mat& a, const Mat& b);

/// Elementwise max |a - b|; shapes must agree.
double max_abs_diff(const Mat& a, const Mat& b);

namespace detail {

/// c = alpha * op(a) * op(b) + beta * c with row-major dense operands.
/// m, n are the dimensions of c; k is the contracted dimension.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

}  // namespace detail

}  // namespace stgcrnn
