#pragma once

// Small dense matrix kernels: Cholesky, SPD solves, bootstrap-draw
// covariances, and the nearest-rank empirical quantile. Sizes here are tiny
// (d up to a few dozen); everything is plain row-major double storage.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ptd/errors.hpp"

namespace ptd {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& r : rows) {
      assert(r.size() == m.cols_);
      std::size_t j = 0;
      for (double v : r) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  std::span<const double> row(std::size_t i) const {
    assert(i < rows_);
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) {
    assert(i < rows_);
    return {data_.data() + i * cols_, cols_};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix operator*(const Matrix& rhs) const {
    if (cols_ != rhs.rows_) throw ShapeMismatchError("matrix product shape mismatch");
    Matrix out(rows_, rhs.cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t k = 0; k < cols_; ++k) {
        const double a = (*this)(i, k);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
      }
    }
    return out;
  }

  Matrix& operator+=(const Matrix& rhs) {
    require_same_shape(rhs);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& rhs) {
    require_same_shape(rhs);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
    return *this;
  }
  Matrix operator+(const Matrix& rhs) const {
    Matrix out = *this;
    out += rhs;
    return out;
  }
  Matrix operator-(const Matrix& rhs) const {
    Matrix out = *this;
    out -= rhs;
    return out;
  }
  Matrix scaled(double c) const {
    Matrix out = *this;
    for (double& v : out.data_) v *= c;
    return out;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void require_same_shape(const Matrix& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
      throw ShapeMismatchError("matrix shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Vector mat_vec(const Matrix& a, std::span<const double> v) {
  if (a.cols() != v.size()) throw ShapeMismatchError("mat_vec shape mismatch");
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

// Lower-triangular Cholesky factor; strictly upper entries are zero and the
// diagonal is strictly positive.
struct LowerTriangular {
  std::size_t dim = 0;
  Matrix entries;
};

namespace detail {

constexpr double kSpdPivotTol = 1e-12;

}  // namespace detail

// Cholesky factorization of a symmetric positive-definite matrix. The input
// is symmetrized as (A + A^T)/2 before factoring since bootstrap covariance
// estimates carry floating-point asymmetry. Throws NotSpdError when a pivot
// falls at or below 1e-12 times the largest diagonal entry.
inline LowerTriangular cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeMismatchError("cholesky requires a square matrix");
  const std::size_t n = a.rows();
  Matrix sym(n, n);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (a(i, j) + a(j, i));
    assert(std::isfinite(sym(i, i)));
    max_diag = std::max(max_diag, sym(i, i));
  }
  const double pivot_floor = detail::kSpdPivotTol * max_diag;

  LowerTriangular l{n, Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    double d = sym(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.entries(j, k) * l.entries(j, k);
    if (!(d > pivot_floor) || !std::isfinite(d))
      throw NotSpdError("cholesky pivot " + std::to_string(j) + " is not positive definite");
    const double root = std::sqrt(d);
    l.entries(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = sym(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.entries(i, k) * l.entries(j, k);
      l.entries(i, j) = s / root;
    }
  }
  return l;
}

inline Vector solve_lower(const LowerTriangular& l, std::span<const double> b) {
  const std::size_t n = l.dim;
  assert(b.size() == n);
  Vector x(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l.entries(i, k) * x[k];
    x[i] = s / l.entries(i, i);
  }
  return x;
}

inline Vector solve_lower_transpose(const LowerTriangular& l, std::span<const double> b) {
  const std::size_t n = l.dim;
  assert(b.size() == n);
  Vector x(b.begin(), b.end());
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l.entries(k, ii) * x[k];
    x[ii] = s / l.entries(ii, ii);
  }
  return x;
}

// Solves a x = b for SPD a, column by column through the Cholesky factor.
inline Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeMismatchError("solve_spd row count mismatch");
  const LowerTriangular l = cholesky(a);
  Matrix x(b.rows(), b.cols());
  Vector col(b.rows());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
    Vector y = solve_lower(l, col);
    Vector z = solve_lower_transpose(l, y);
    for (std::size_t i = 0; i < b.rows(); ++i) x(i, j) = z[i];
  }
  return x;
}

inline Vector solve_spd(const Matrix& a, std::span<const double> b) {
  const LowerTriangular l = cholesky(a);
  return solve_lower_transpose(l, solve_lower(l, b));
}

// Unbiased sample covariance (divisor B-1) of B stacked d-dimensional draws.
inline Matrix sample_covariance(const Matrix& draws) {
  const std::size_t b = draws.rows();
  const std::size_t d = draws.cols();
  if (b < 2) throw TooFewDrawsError("sample_covariance needs at least 2 draws");
  Vector mean(d, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += draws(i, j);
  for (double& m : mean) m /= static_cast<double>(b);
  Matrix cov(d, d);
  Vector centered(d);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = draws(i, j) - mean[j];
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k <= j; ++k) cov(j, k) += centered[j] * centered[k];
  }
  const double inv = 1.0 / static_cast<double>(b - 1);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k <= j; ++k) {
      cov(j, k) *= inv;
      cov(k, j) = cov(j, k);
    }
  return cov;
}

// Unbiased sample cross-covariance between two aligned draw matrices;
// sample_cross_covariance(x, x) equals sample_covariance(x).
inline Matrix sample_cross_covariance(const Matrix& draws_a, const Matrix& draws_b) {
  if (draws_a.rows() != draws_b.rows() || draws_a.cols() != draws_b.cols())
    throw ShapeMismatchError("cross-covariance requires matching draw shapes");
  const std::size_t b = draws_a.rows();
  const std::size_t d = draws_a.cols();
  if (b < 2) throw TooFewDrawsError("sample_cross_covariance needs at least 2 draws");
  Vector mean_a(d, 0.0), mean_b(d, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      mean_a[j] += draws_a(i, j);
      mean_b[j] += draws_b(i, j);
    }
  for (std::size_t j = 0; j < d; ++j) {
    mean_a[j] /= static_cast<double>(b);
    mean_b[j] /= static_cast<double>(b);
  }
  Matrix cov(d, d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double aj = draws_a(i, j) - mean_a[j];
      for (std::size_t k = 0; k < d; ++k) cov(j, k) += aj * (draws_b(i, k) - mean_b[k]);
    }
  const double inv = 1.0 / static_cast<double>(b - 1);
  for (double& v : cov.data()) v *= inv;
  return cov;
}

// Nearest-rank quantile: the ceil(q*B)-th smallest value, index clamped to
// [1, B]; q = 0 returns the minimum. Always a member of the input.
inline double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw EmptyInputError("empirical_quantile on empty input");
  assert(q >= 0.0 && q <= 1.0);
  const auto b = static_cast<double>(values.size());
  // Guard against ties like 0.05*100 landing epsilon above the exact rank.
  auto rank = static_cast<long long>(std::ceil(q * b - 1e-9));
  rank = std::clamp(rank, 1LL, static_cast<long long>(values.size()));
  std::vector<double> copy(values.begin(), values.end());
  auto nth = copy.begin() + (rank - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

}  // namespace ptd
