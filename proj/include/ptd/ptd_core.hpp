#pragma once

// The Predict-Then-Debias point estimator, tuning-matrix construction, and
// the asymptotic variance form it minimizes.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ptd/errors.hpp"
#include "ptd/matrix.hpp"

namespace ptd {

class TuningMatrix {
 public:
  enum class Kind { kIdentity, kDiagonal, kFull };

  static TuningMatrix identity() { return TuningMatrix(Kind::kIdentity, {}, {}); }
  static TuningMatrix diagonal(Vector entries) {
    return TuningMatrix(Kind::kDiagonal, std::move(entries), {});
  }
  static TuningMatrix zero(std::size_t d) { return diagonal(Vector(d, 0.0)); }
  static TuningMatrix full(Matrix m) {
    if (m.rows() != m.cols()) throw ShapeMismatchError("full tuning matrix must be square");
    return TuningMatrix(Kind::kFull, {}, std::move(m));
  }

  Kind kind() const { return kind_; }
  const Vector& diag() const { return diag_; }
  const Matrix& full_matrix() const { return full_; }

  // Omega v.
  Vector apply(std::span<const double> v) const {
    switch (kind_) {
      case Kind::kIdentity:
        return Vector(v.begin(), v.end());
      case Kind::kDiagonal: {
        if (diag_.size() != v.size()) throw ShapeMismatchError("tuning dimension mismatch");
        Vector out(v.size());
        for (std::size_t j = 0; j < v.size(); ++j) out[j] = diag_[j] * v[j];
        return out;
      }
      case Kind::kFull:
        return mat_vec(full_, v);
    }
    throw InvalidConfigError("unknown tuning kind");
  }

  Matrix materialize(std::size_t d) const {
    switch (kind_) {
      case Kind::kIdentity:
        return Matrix::identity(d);
      case Kind::kDiagonal: {
        if (diag_.size() != d) throw ShapeMismatchError("tuning dimension mismatch");
        Matrix m(d, d);
        for (std::size_t j = 0; j < d; ++j) m(j, j) = diag_[j];
        return m;
      }
      case Kind::kFull:
        if (full_.rows() != d) throw ShapeMismatchError("tuning dimension mismatch");
        return full_;
    }
    throw InvalidConfigError("unknown tuning kind");
  }

  std::string label() const {
    switch (kind_) {
      case Kind::kIdentity:
        return "identity";
      case Kind::kDiagonal:
        return "diag";
      case Kind::kFull:
        return "full";
    }
    return "?";
  }

 private:
  TuningMatrix(Kind kind, Vector diag, Matrix full)
      : kind_(kind), diag_(std::move(diag)), full_(std::move(full)) {}

  Kind kind_;
  Vector diag_;
  Matrix full_;
};

// N-scaled covariance estimates driving tuning and CLT intervals:
// Sigma_theta-complete, Sigma_gamma-complete, Sigma_gamma-incomplete, and the
// theta/gamma cross term on the complete sample.
struct CovarianceBundle {
  Matrix sigma_theta_c;
  Matrix sigma_gamma_c;
  Matrix sigma_gamma_o;
  Matrix sigma_cross;

  std::size_t dim() const { return sigma_cross.rows(); }
};

struct IntervalPair {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

struct Diagnostics {
  std::size_t replicates = 0;
  std::size_t redraws = 0;
  bool ridge_applied = false;
  bool convolution_inner_bootstrap = false;
  bool point_fit_converged = true;
};

// Point estimate with per-coordinate confidence intervals and the tuning
// matrix that produced them.
struct PTDResult {
  Vector point;
  std::vector<IntervalPair> intervals;
  TuningMatrix tuning = TuningMatrix::identity();
  std::string method;
  double alpha = 0.1;
  Diagnostics diagnostics;
};

// Omega gamma_incomplete + (theta_complete - Omega gamma_complete).
inline Vector ptd_combine(const TuningMatrix& omega, std::span<const double> gamma_o,
                          std::span<const double> theta_c, std::span<const double> gamma_c) {
  if (gamma_o.size() != theta_c.size() || gamma_c.size() != theta_c.size())
    throw ShapeMismatchError("ptd_combine dimension mismatch");
  Vector out = omega.apply(gamma_o);
  const Vector corr = omega.apply(gamma_c);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += theta_c[j] - corr[j];
  return out;
}

// Coordinatewise-optimal diagonal tuning:
// Omega_jj = cross_jj / (gamma_complete + gamma_incomplete)_jj.
inline TuningMatrix optimal_diag_tuning(const CovarianceBundle& cov) {
  const std::size_t d = cov.dim();
  if (cov.sigma_gamma_c.rows() != d || cov.sigma_gamma_o.rows() != d)
    throw ShapeMismatchError("covariance bundle dimension mismatch");
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) trace += cov.sigma_gamma_c(j, j) + cov.sigma_gamma_o(j, j);
  const double floor = 1e-14 * trace / static_cast<double>(d);
  Vector diag(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double denom = cov.sigma_gamma_c(j, j) + cov.sigma_gamma_o(j, j);
    if (!(denom > floor) || !(denom > 0.0))
      throw DegenerateDenominatorError("tuning denominator vanishes at coordinate " +
                                       std::to_string(j));
    diag[j] = cov.sigma_cross(j, j) / denom;
  }
  return TuningMatrix::diagonal(std::move(diag));
}

// Variance-optimal full tuning: Omega = cross (gamma_c + gamma_o)^-1. When
// the bootstrap denominator matrix is numerically singular a ridge of
// 1e-10 * trace/d is added once and reported through ridge_applied.
inline TuningMatrix optimal_full_tuning(const CovarianceBundle& cov,
                                        bool* ridge_applied = nullptr) {
  const std::size_t d = cov.dim();
  Matrix denom = cov.sigma_gamma_c + cov.sigma_gamma_o;
  if (ridge_applied) *ridge_applied = false;
  const Matrix rhs = cov.sigma_cross.transposed();
  Matrix omega_t;
  try {
    omega_t = solve_spd(denom, rhs);
  } catch (const NotSpdError&) {
    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) trace += denom(j, j);
    const double ridge = 1e-10 * trace / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) denom(j, j) += ridge;
    omega_t = solve_spd(denom, rhs);  // NotSpdError propagates if still singular
    if (ridge_applied) *ridge_applied = true;
  }
  return TuningMatrix::full(omega_t.transposed());
}

// Sigma_PTD(Omega) = Sigma_theta - cross Omega^T - Omega cross^T
//                  + Omega (Sigma_gamma_c + Sigma_gamma_o) Omega^T.
inline Matrix ptd_asymptotic_variance(const TuningMatrix& omega, const CovarianceBundle& cov) {
  const std::size_t d = cov.dim();
  if (cov.sigma_theta_c.rows() != d) throw ShapeMismatchError("covariance bundle mismatch");
  const Matrix om = omega.materialize(d);
  const Matrix om_t = om.transposed();
  const Matrix gamma_sum = cov.sigma_gamma_c + cov.sigma_gamma_o;
  return cov.sigma_theta_c - cov.sigma_cross * om_t - om * cov.sigma_cross.transposed() +
         om * gamma_sum * om_t;
}

}  // namespace ptd
