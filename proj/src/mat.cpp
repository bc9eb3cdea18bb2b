#include "stgcrnn/mat.hpp"

#include <Eigen/Core>
#include <cmath>

#include "stgcrnn/errors.hpp"

namespace stgcrnn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  if (v_.size() != rows * cols) {
    throw ShapeError("Mat: value count " + std::to_string(v_.size()) +
                     " does not match shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Mat m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
    std::size_t j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Mat::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

double Mat::max_abs() const {
  double m = 0.0;
  for (double x : v_) m = std::max(m, std::abs(x));
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  Mat c(a.rows(), b.cols());
  detail::gemm(false, false, a.rows(), b.cols(), a.cols(), 1.0, a.data(), b.data(), 0.0,
               c.data());
  return c;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.vec()[i] - b.vec()[i]));
  return m;
}

namespace detail {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto ek = static_cast<Eigen::Index>(k);
  MMap cm(c, em, en);
  CMap am(a, trans_a ? ek : em, trans_a ? em : ek);
  CMap bm(b, trans_b ? en : ek, trans_b ? ek : en);

  const auto run = [&](auto&& prod) {
    if (beta == 0.0) {
      if (alpha == 1.0)
        cm.noalias() = prod;
      else
        cm.noalias() = alpha * prod;
    } else {
      // beta must be 1 in all call sites that accumulate
      if (alpha == 1.0)
        cm.noalias() += prod;
      else
        cm.noalias() += alpha * prod;
    }
  };

  if (!trans_a && !trans_b)
    run(am * bm);
  else if (trans_a && !trans_b)
    run(am.transpose() * bm);
  else if (!trans_a && trans_b)
    run(am * bm.transpose());
  else
    run(am.transpose() * bm.transpose());
}

}  // namespace detail

}  // namespace stgcrnn
