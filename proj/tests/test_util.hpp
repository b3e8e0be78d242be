#pragma once

// Shared helpers for the unit suites: deterministic random matrices and
// small comparison utilities.

#include <cmath>
#include <vector>

#include "ptd/matrix.hpp"
#include "ptd/rng.hpp"

namespace ptd_test {

inline ptd::Matrix random_matrix(std::size_t rows, std::size_t cols, ptd::RngStream& rng,
                                 double scale = 1.0) {
  ptd::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = scale * rng.next_normal();
  return m;
}

// Random SPD matrix M^T M + ridge I.
inline ptd::Matrix random_spd(std::size_t d, ptd::RngStream& rng, double ridge = 0.5) {
  const ptd::Matrix m = random_matrix(d + 3, d, rng);
  ptd::Matrix a = m.transposed() * m;
  for (std::size_t j = 0; j < d; ++j) a(j, j) += ridge;
  return a;
}

// SPD matrix with eigenvalues spread over [1/sqrt(cond), sqrt(cond)] built
// from random Givens rotations, so the condition number is controlled.
inline ptd::Matrix conditioned_spd(std::size_t d, double cond, ptd::RngStream& rng) {
  ptd::Matrix a(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    const double t = d == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(d - 1);
    a(j, j) = std::pow(cond, t - 0.5);
  }
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (std::size_t p = 0; p + 1 < d; ++p) {
      const std::size_t q = p + 1 + rng.next_below(d - p - 1);
      const double angle = 2.0 * 3.14159265358979323846 * rng.next_double();
      const double c = std::cos(angle), s = std::sin(angle);
      for (std::size_t j = 0; j < d; ++j) {  // rows
        const double ap = a(p, j), aq = a(q, j);
        a(p, j) = c * ap - s * aq;
        a(q, j) = s * ap + c * aq;
      }
      for (std::size_t i = 0; i < d; ++i) {  // columns
        const double ap = a(i, p), aq = a(i, q);
        a(i, p) = c * ap - s * aq;
        a(i, q) = s * ap + c * aq;
      }
    }
  }
  // Rotations preserve symmetry up to rounding; clean it up.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

inline double max_abs_diff(const ptd::Matrix& a, const ptd::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ptd_test
