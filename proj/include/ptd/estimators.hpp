#pragma once

// Weighted estimator functions A(data; weights) -> R^d for the mean, OLS,
// logistic regression, and quantile regression, plus the sandwich and
// cross-estimator covariance machinery built from their scores and Hessians.
//
// Every fitter minimizes the weighted empirical loss over the positive-weight
// rows only; zero-weight rows are never read, which is what lets data
// matrices carry missing (NaN) cells on rows the weights exclude.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ptd/errors.hpp"
#include "ptd/matrix.hpp"
#include "ptd/rng.hpp"

namespace ptd {

enum class EstimatorKind { kMean, kOls, kLogistic, kQuantile };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kOls;
  double quantile_level = 0.5;      // only read for kQuantile
  std::size_t response_column = 0;  // unused for kMean
  std::vector<std::size_t> covariate_columns;
  bool include_intercept = true;

  // Coefficient order is (intercept, covariates...) for regression kinds and
  // one coordinate per selected column for the mean.
  std::size_t dimension() const {
    if (kind == EstimatorKind::kMean) return covariate_columns.size();
    return covariate_columns.size() + (include_intercept ? 1 : 0);
  }
};

using WeightVector = std::vector<double>;

struct FitResult {
  Vector theta;
  bool converged = true;
  int iterations = 0;
  std::size_t effective_rows = 0;
};

namespace detail {

inline void validate_spec(const EstimatorSpec& spec, std::size_t p) {
  if (spec.dimension() == 0) throw InvalidConfigError("estimator has dimension 0");
  for (std::size_t c : spec.covariate_columns)
    if (c >= p) throw ShapeMismatchError("covariate column out of range");
  if (spec.kind != EstimatorKind::kMean) {
    if (spec.response_column >= p) throw ShapeMismatchError("response column out of range");
    for (std::size_t c : spec.covariate_columns)
      if (c == spec.response_column)
        throw InvalidConfigError("response column overlaps covariate columns");
  }
  if (spec.kind == EstimatorKind::kQuantile &&
      !(spec.quantile_level > 0.0 && spec.quantile_level < 1.0))
    throw InvalidConfigError("quantile level must lie in (0,1)");
}

// Loads the regression design row (intercept first) and returns the response.
inline double load_design(const EstimatorSpec& spec, const Matrix& data, std::size_t row,
                          double* x) {
  std::size_t j = 0;
  if (spec.include_intercept) x[j++] = 1.0;
  for (std::size_t c : spec.covariate_columns) {
    x[j++] = data(row, c);
    assert(std::isfinite(x[j - 1]) && "read a missing cell on a weighted row");
  }
  const double y = data(row, spec.response_column);
  assert(std::isfinite(y) && "read a missing response on a weighted row");
  return y;
}

struct SymAccumulator {
  explicit SymAccumulator(std::size_t d) : d_(d), lower_(d * (d + 1) / 2, 0.0) {}
  void add(const double* x, double c) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < d_; ++i) {
      const double cxi = c * x[i];
      for (std::size_t j = 0; j <= i; ++j) lower_[k++] += cxi * x[j];
    }
  }
  void add_identity(double c) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < d_; ++i) {
      for (std::size_t j = 0; j <= i; ++j, ++k)
        if (i == j) lower_[k] += c;
    }
  }
  Matrix to_matrix(double scale = 1.0) const {
    Matrix m(d_, d_);
    std::size_t k = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j <= i; ++j, ++k) {
        m(i, j) = lower_[k] * scale;
        m(j, i) = m(i, j);
      }
    return m;
  }
  std::size_t d_;
  std::vector<double> lower_;
};

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double logistic_loss_term(double t, double y) {
  // log(1 + e^t) - y t, evaluated stably.
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))) - y * t;
}

// Huberized check loss: the kink of r(q - 1{r<0}) is replaced by a quadratic
// on [-h, h].
inline double smoothed_check_loss(double r, double q, double h) {
  if (r > h) return q * r;
  if (r < -h) return (q - 1.0) * r;
  return (q - 0.5) * r + r * r / (4.0 * h) + h / 4.0;
}

inline double smoothed_check_psi(double r, double q, double h) {
  if (r > h) return q;
  if (r < -h) return q - 1.0;
  return q - 0.5 + r / (2.0 * h);
}

}  // namespace detail

namespace detail {

struct RowSelection {
  std::vector<std::int32_t> rows;
  std::vector<double> weights;
};

inline RowSelection positive_rows(const WeightVector& w) {
  RowSelection sel;
  sel.rows.reserve(w.size());
  sel.weights.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
      throw InvalidDesignError("weights must be finite and nonnegative");
    if (w[i] > 0.0) {
      sel.rows.push_back(static_cast<std::int32_t>(i));
      sel.weights.push_back(w[i]);
    }
  }
  return sel;
}

inline FitResult fit_mean(const EstimatorSpec& spec, const Matrix& data,
                          std::span<const std::int32_t> rows, std::span<const double> w) {
  const std::size_t d = spec.dimension();
  Vector sum(d, 0.0);
  double wsum = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (w[k] <= 0.0) continue;
    ++m;
    wsum += w[k];
    const auto i = static_cast<std::size_t>(rows[k]);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = data(i, spec.covariate_columns[j]);
      assert(std::isfinite(v) && "read a missing cell on a weighted row");
      sum[j] += w[k] * v;
    }
  }
  if (m == 0) throw InsufficientDataError("no positive-weight rows for mean");
  FitResult out;
  out.theta.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.theta[j] = sum[j] / wsum;
  out.effective_rows = m;
  return out;
}

inline FitResult fit_ols(const EstimatorSpec& spec, const Matrix& data,
                         std::span<const std::int32_t> rows, std::span<const double> w) {
  const std::size_t d = spec.dimension();
  SymAccumulator gram(d);
  Vector rhs(d, 0.0);
  std::vector<double> x(d);
  double wsum = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (w[k] <= 0.0) continue;
    ++m;
    wsum += w[k];
  }
  if (m < d) throw InsufficientDataError("fewer positive-weight rows than coefficients");
  const double inv = 1.0 / wsum;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (w[k] <= 0.0) continue;
    const double wk = w[k] * inv;
    const double y = load_design(spec, data, static_cast<std::size_t>(rows[k]), x.data());
    gram.add(x.data(), wk);
    for (std::size_t j = 0; j < d; ++j) rhs[j] += wk * y * x[j];
  }
  FitResult out;
  try {
    out.theta = solve_spd(gram.to_matrix(), rhs);
  } catch (const NotSpdError&) {
    throw RankDeficientError("weighted design matrix is singular");
  }
  out.effective_rows = m;
  return out;
}

inline FitResult fit_logistic(const EstimatorSpec& spec, const Matrix& data,
                              std::span<const std::int32_t> rows, std::span<const double> w) {
  const std::size_t d = spec.dimension();
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-8;

  std::vector<std::int32_t> kept;
  std::vector<double> kw;
  double wsum = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (w[k] > 0.0) {
      kept.push_back(rows[k]);
      kw.push_back(w[k]);
      wsum += w[k];
    }
  if (kept.size() < d) throw InsufficientDataError("fewer positive-weight rows than coefficients");
  const double inv = 1.0 / wsum;

  Vector theta(d, 0.0);
  std::vector<double> x(d);

  auto objective = [&](const Vector& beta, Vector* grad) {
    double loss = 0.0;
    if (grad) grad->assign(d, 0.0);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double wk = kw[k] * inv;
      const double y = load_design(spec, data, static_cast<std::size_t>(kept[k]), x.data());
      double t = 0.0;
      for (std::size_t j = 0; j < d; ++j) t += x[j] * beta[j];
      loss += wk * logistic_loss_term(t, y);
      if (grad) {
        const double res = sigmoid(t) - y;
        for (std::size_t j = 0; j < d; ++j) (*grad)[j] += wk * res * x[j];
      }
    }
    return loss;
  };

  FitResult out;
  Vector grad(d);
  double loss = objective(theta, &grad);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double grad_inf = 0.0;
    for (double g : grad) grad_inf = std::max(grad_inf, std::abs(g));
    if (grad_inf <= kTol) {
      out.theta = theta;
      out.converged = true;
      out.iterations = iter;
      out.effective_rows = kept.size();
      return out;
    }
    SymAccumulator hess(d);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double wk = kw[k] * inv;
      load_design(spec, data, static_cast<std::size_t>(kept[k]), x.data());
      double t = 0.0;
      for (std::size_t j = 0; j < d; ++j) t += x[j] * theta[j];
      const double p = sigmoid(t);
      hess.add(x.data(), wk * p * (1.0 - p));
    }
    Vector step;
    try {
      step = solve_spd(hess.to_matrix(), grad);
    } catch (const NotSpdError&) {
      throw RankDeficientError("logistic Hessian is singular");
    }
    // Step halving keeps the weighted loss monotone.
    double scale = 1.0;
    Vector candidate(d);
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      for (std::size_t j = 0; j < d; ++j) candidate[j] = theta[j] - scale * step[j];
      const double cand_loss = objective(candidate, nullptr);
      if (cand_loss <= loss + 1e-14 * (1.0 + std::abs(loss))) {
        theta = candidate;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    loss = objective(theta, &grad);
  }
  double grad_inf = 0.0;
  for (double g : grad) grad_inf = std::max(grad_inf, std::abs(g));
  if (grad_inf > kTol)
    throw NoConvergenceError("logistic fit did not reach score tolerance in 100 iterations");
  out.theta = theta;
  out.converged = true;
  out.iterations = kMaxIter;
  out.effective_rows = kept.size();
  return out;
}

// Smoothed check loss minimized by damped Newton with a Levenberg fallback.
// The bandwidth anneals geometrically down to c * m^{-1/2} with
// c = 0.05 * response IQR, then two polish iterations run at h/10.
inline FitResult fit_quantile(const EstimatorSpec& spec, const Matrix& data,
                              std::span<const std::int32_t> rows, std::span<const double> w) {
  const std::size_t d = spec.dimension();
  const double q = spec.quantile_level;

  std::vector<std::int32_t> kept;
  std::vector<double> kw;
  double wsum = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (w[k] > 0.0) {
      kept.push_back(rows[k]);
      kw.push_back(w[k]);
      wsum += w[k];
    }
  if (kept.size() < d) throw InsufficientDataError("fewer positive-weight rows than coefficients");
  const std::size_t m = kept.size();
  const double inv = 1.0 / wsum;

  Vector responses(m);
  for (std::size_t k = 0; k < m; ++k)
    responses[k] = data(static_cast<std::size_t>(kept[k]), spec.response_column);
  const double iqr = empirical_quantile(responses, 0.75) - empirical_quantile(responses, 0.25);
  const double scale0 = iqr > 0.0 ? iqr : 1e-8 * (1.0 + std::abs(responses[0]));
  const double h_final = 0.05 * scale0 / std::sqrt(static_cast<double>(m));

  FitResult out = fit_ols(spec, data, rows, w);
  Vector theta = out.theta;
  std::vector<double> x(d);

  auto objective = [&](const Vector& beta, double h, Vector* grad) {
    double loss = 0.0;
    if (grad) grad->assign(d, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double wk = kw[k] * inv;
      const double y = load_design(spec, data, static_cast<std::size_t>(kept[k]), x.data());
      double fitv = 0.0;
      for (std::size_t j = 0; j < d; ++j) fitv += x[j] * beta[j];
      const double r = y - fitv;
      loss += wk * smoothed_check_loss(r, q, h);
      if (grad) {
        const double psi = smoothed_check_psi(r, q, h);
        for (std::size_t j = 0; j < d; ++j) (*grad)[j] -= wk * psi * x[j];
      }
    }
    return loss;
  };

  int total_iters = 0;
  double lambda = 1e-4;
  auto newton_at = [&](double h, int iters, double tol) {
    Vector grad(d), candidate(d);
    double loss = objective(theta, h, &grad);
    for (int iter = 0; iter < iters; ++iter) {
      ++total_iters;
      double grad_inf = 0.0;
      for (double g : grad) grad_inf = std::max(grad_inf, std::abs(g));
      if (grad_inf <= tol) return true;
      SymAccumulator hess(d);
      double xtx_trace = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double wk = kw[k] * inv;
        const double y = load_design(spec, data, static_cast<std::size_t>(kept[k]), x.data());
        double fitv = 0.0;
        for (std::size_t j = 0; j < d; ++j) fitv += x[j] * theta[j];
        const double r = y - fitv;
        double x2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) x2 += x[j] * x[j];
        xtx_trace += wk * x2;
        if (std::abs(r) <= h) hess.add(x.data(), wk / (2.0 * h));
      }
      const double ridge_unit = std::max(xtx_trace / static_cast<double>(d), 1e-300);
      Vector step;
      for (;;) {
        Matrix hm = hess.to_matrix();
        for (std::size_t j = 0; j < d; ++j) hm(j, j) += lambda * ridge_unit;
        try {
          step = solve_spd(hm, grad);
          break;
        } catch (const NotSpdError&) {
          lambda = std::max(lambda * 10.0, 1e-6);
          if (lambda > 1e12) throw RankDeficientError("quantile Hessian is singular");
        }
      }
      double scale = 1.0;
      bool accepted = false;
      for (int half = 0; half < 40; ++half) {
        for (std::size_t j = 0; j < d; ++j) candidate[j] = theta[j] - scale * step[j];
        const double cand_loss = objective(candidate, h, nullptr);
        if (cand_loss <= loss + 1e-14 * (1.0 + std::abs(loss))) {
          theta = candidate;
          loss = cand_loss;
          accepted = true;
          break;
        }
        scale *= 0.5;
      }
      if (accepted) {
        lambda = std::max(lambda * 0.25, 1e-10);
        loss = objective(theta, h, &grad);
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) return false;
      }
    }
    return false;
  };

  bool settled = false;
  for (double h = scale0; h > h_final; h *= 0.5) {
    newton_at(h, 3, 1e-10 * scale0);
    if (total_iters > 400) break;
  }
  settled = newton_at(h_final, 30, 1e-10 * scale0);
  newton_at(h_final / 10.0, 2, 0.0);

  out.theta = theta;
  out.converged = settled;
  out.iterations = total_iters;
  out.effective_rows = m;
  return out;
}

}  // namespace detail

// Fits the weighted estimator over an explicit row selection: row k of the
// virtual data set is data.row(rows[k]) carrying weight weights[k]. This is
// the entry point the bootstrap loops use, so it never copies the matrix.
inline FitResult fit_rows(const EstimatorSpec& spec, const Matrix& data,
                          std::span<const std::int32_t> rows, std::span<const double> weights) {
  assert(rows.size() == weights.size());
  detail::validate_spec(spec, data.cols());
  switch (spec.kind) {
    case EstimatorKind::kMean:
      return detail::fit_mean(spec, data, rows, weights);
    case EstimatorKind::kOls:
      return detail::fit_ols(spec, data, rows, weights);
    case EstimatorKind::kLogistic:
      return detail::fit_logistic(spec, data, rows, weights);
    case EstimatorKind::kQuantile:
      return detail::fit_quantile(spec, data, rows, weights);
  }
  throw InvalidConfigError("unknown estimator kind");
}

inline FitResult fit(const EstimatorSpec& spec, const Matrix& data, const WeightVector& w) {
  if (w.size() != data.rows()) throw ShapeMismatchError("weight vector length mismatch");
  const detail::RowSelection sel = detail::positive_rows(w);
  if (sel.rows.empty()) throw InsufficientDataError("all weights are zero");
  return fit_rows(spec, data, sel.rows, sel.weights);
}

// Weighted mean gradient of the loss at theta, normalized by the total
// weight; vanishes at a fitted theta for the smooth kinds. The quantile kind
// reports the raw check-loss subgradient.
inline Vector score(const EstimatorSpec& spec, const Matrix& data, const WeightVector& w,
                    std::span<const double> theta) {
  detail::validate_spec(spec, data.cols());
  const std::size_t d = spec.dimension();
  if (theta.size() != d) throw ShapeMismatchError("theta dimension mismatch");
  if (w.size() != data.rows()) throw ShapeMismatchError("weight vector length mismatch");
  Vector g(d, 0.0);
  std::vector<double> x(d);
  double wsum = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (w[i] <= 0.0) continue;
    wsum += w[i];
    if (spec.kind == EstimatorKind::kMean) {
      for (std::size_t j = 0; j < d; ++j)
        g[j] += w[i] * (theta[j] - data(i, spec.covariate_columns[j]));
      continue;
    }
    const double y = detail::load_design(spec, data, i, x.data());
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += x[j] * theta[j];
    double factor = 0.0;
    switch (spec.kind) {
      case EstimatorKind::kOls:
        factor = t - y;
        break;
      case EstimatorKind::kLogistic:
        factor = detail::sigmoid(t) - y;
        break;
      case EstimatorKind::kQuantile:
        factor = -(spec.quantile_level - (y - t < 0.0 ? 1.0 : 0.0));
        break;
      default:
        break;
    }
    for (std::size_t j = 0; j < d; ++j) g[j] += w[i] * factor * x[j];
  }
  if (wsum <= 0.0) throw InsufficientDataError("all weights are zero");
  for (double& v : g) v /= wsum;
  return g;
}

namespace detail {

// Accumulates the bread D = (1/N) sum w_i Hess_i and hands per-row scores to
// the caller for whatever meat it is building.
template <class ScoreSink>
Matrix accumulate_bread(const EstimatorSpec& spec, const Matrix& data, const WeightVector& w,
                        std::span<const double> theta, double powell_band, ScoreSink&& sink) {
  const std::size_t d = spec.dimension();
  const std::size_t n = data.rows();
  SymAccumulator bread(d);
  std::vector<double> x(d);
  Vector g(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    if (spec.kind == EstimatorKind::kMean) {
      bread.add_identity(w[i]);
      for (std::size_t j = 0; j < d; ++j)
        g[j] = theta[j] - data(i, spec.covariate_columns[j]);
      sink(i, g);
      continue;
    }
    const double y = load_design(spec, data, i, x.data());
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += x[j] * theta[j];
    switch (spec.kind) {
      case EstimatorKind::kOls: {
        bread.add(x.data(), w[i]);
        const double factor = t - y;
        for (std::size_t j = 0; j < d; ++j) g[j] = factor * x[j];
        break;
      }
      case EstimatorKind::kLogistic: {
        const double p = sigmoid(t);
        bread.add(x.data(), w[i] * p * (1.0 - p));
        const double factor = p - y;
        for (std::size_t j = 0; j < d; ++j) g[j] = factor * x[j];
        break;
      }
      case EstimatorKind::kQuantile: {
        const double r = y - t;
        if (std::abs(r) <= powell_band) bread.add(x.data(), w[i] / (2.0 * powell_band));
        const double factor = -(spec.quantile_level - (r < 0.0 ? 1.0 : 0.0));
        for (std::size_t j = 0; j < d; ++j) g[j] = factor * x[j];
        break;
      }
      default:
        break;
    }
    sink(i, g);
  }
  return bread.to_matrix(1.0 / static_cast<double>(n));
}

// Powell's density bandwidth: Hall-Sheather rate in probability space mapped
// to the residual scale through the empirical residual quantiles.
inline double powell_bandwidth(const EstimatorSpec& spec, const Matrix& data,
                               const WeightVector& w, std::span<const double> theta) {
  if (spec.kind != EstimatorKind::kQuantile) return 0.0;
  const std::size_t d = spec.dimension();
  std::vector<double> x(d);
  std::vector<double> residuals;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (w[i] <= 0.0) continue;
    const double y = load_design(spec, data, i, x.data());
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += x[j] * theta[j];
    residuals.push_back(y - t);
  }
  if (residuals.empty()) throw InsufficientDataError("no positive-weight rows");
  const double m = static_cast<double>(residuals.size());
  const double q = spec.quantile_level;
  const double zq = normal_quantile(q);
  const double z975 = normal_quantile(0.975);
  const double phi_zq = std::exp(-0.5 * zq * zq) / std::sqrt(2.0 * 3.14159265358979323846);
  const double hq = std::cbrt(z975 * z975) *
                    std::cbrt(1.5 * phi_zq * phi_zq / (2.0 * zq * zq + 1.0)) / std::cbrt(m);
  const double lo = std::clamp(q - hq, 1e-4, 1.0 - 1e-4);
  const double hi = std::clamp(q + hq, 1e-4, 1.0 - 1e-4);
  double band = 0.5 * (empirical_quantile(residuals, hi) - empirical_quantile(residuals, lo));
  const double iqr = empirical_quantile(residuals, 0.75) - empirical_quantile(residuals, 0.25);
  if (!(band > 0.0)) band = 1e-8 * (1.0 + std::abs(iqr));
  return band;
}

inline Matrix sandwich_from_parts(const Matrix& bread, const Matrix& meat, std::size_t n) {
  Matrix half;
  try {
    half = solve_spd(bread, meat);  // D^-1 C
  } catch (const NotSpdError&) {
    throw RankDeficientError("sandwich bread matrix is singular");
  }
  Matrix full = solve_spd(bread, half.transposed()).transposed();  // D^-1 C D^-1
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : full.data()) v *= inv_n;
  // Exact symmetry; the two solves can disagree in the last bits.
  for (std::size_t i = 0; i < full.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double s = 0.5 * (full(i, j) + full(j, i));
      full(i, j) = s;
      full(j, i) = s;
    }
  return full;
}

}  // namespace detail

// Plug-in sandwich estimate of Var(estimator): D^-1 C D^-1 / N with
// D = (1/N) sum w_i Hess_i and C = (1/N) sum w_i^2 score_i score_i^T.
// N * result estimates the N-scaled asymptotic covariance. The quantile kind
// uses the Powell kernel Hessian estimate.
inline Matrix sandwich_covariance(const EstimatorSpec& spec, const Matrix& data,
                                  const WeightVector& w, std::span<const double> theta) {
  detail::validate_spec(spec, data.cols());
  if (w.size() != data.rows()) throw ShapeMismatchError("weight vector length mismatch");
  const std::size_t d = spec.dimension();
  if (theta.size() != d) throw ShapeMismatchError("theta dimension mismatch");
  const std::size_t n = data.rows();
  const double band = detail::powell_bandwidth(spec, data, w, theta);
  detail::SymAccumulator meat(d);
  Matrix bread = detail::accumulate_bread(
      spec, data, w, theta, band,
      [&](std::size_t i, const Vector& g) { meat.add(g.data(), w[i] * w[i]); });
  return detail::sandwich_from_parts(bread, meat.to_matrix(1.0 / static_cast<double>(n)), n);
}

// Cluster-robust variant: the meat is built from per-cluster score sums, so
// intra-cluster score correlation is kept.
inline Matrix cluster_sandwich_covariance(const EstimatorSpec& spec, const Matrix& data,
                                          const WeightVector& w, std::span<const double> theta,
                                          std::span<const std::int32_t> cluster_of) {
  detail::validate_spec(spec, data.cols());
  if (w.size() != data.rows() || cluster_of.size() != data.rows())
    throw ShapeMismatchError("weight or cluster vector length mismatch");
  const std::size_t d = spec.dimension();
  const std::size_t n = data.rows();
  std::int32_t max_cluster = -1;
  for (std::int32_t c : cluster_of) max_cluster = std::max(max_cluster, c);
  Matrix cluster_sums(static_cast<std::size_t>(max_cluster + 1), d);
  const double band = detail::powell_bandwidth(spec, data, w, theta);
  Matrix bread = detail::accumulate_bread(spec, data, w, theta, band,
                                          [&](std::size_t i, const Vector& g) {
                                            auto c = static_cast<std::size_t>(cluster_of[i]);
                                            for (std::size_t j = 0; j < d; ++j)
                                              cluster_sums(c, j) += w[i] * g[j];
                                          });
  detail::SymAccumulator meat(d);
  for (std::size_t c = 0; c < cluster_sums.rows(); ++c)
    meat.add(cluster_sums.row(c).data(), 1.0);
  return detail::sandwich_from_parts(bread, meat.to_matrix(1.0 / static_cast<double>(n)), n);
}

// Plug-in estimate of the N-scaled asymptotic cross-covariance between the
// complete-sample fit on true data and the complete-sample fit on proxy data:
// D1^-1 C12 D2^-1 with C12 = (1/N) sum w_i^2 score1_i score2_i^T.
inline Matrix cross_covariance_mest(const EstimatorSpec& spec, const Matrix& data_true,
                                    const Matrix& data_proxy, const WeightVector& w,
                                    std::span<const double> theta, std::span<const double> gamma) {
  if (spec.kind == EstimatorKind::kQuantile)
    throw UnsupportedKindError("cross covariance is undefined for the quantile kind");
  detail::validate_spec(spec, data_true.cols());
  if (data_true.rows() != data_proxy.rows())
    throw ShapeMismatchError("true/proxy row count mismatch");
  if (w.size() != data_true.rows()) throw ShapeMismatchError("weight vector length mismatch");
  const std::size_t d = spec.dimension();
  const std::size_t n = data_true.rows();

  Matrix scores_true(n, d);
  Matrix bread_true = detail::accumulate_bread(spec, data_true, w, theta, 0.0,
                                               [&](std::size_t i, const Vector& g) {
                                                 for (std::size_t j = 0; j < d; ++j)
                                                   scores_true(i, j) = g[j];
                                               });
  Matrix c12(d, d);
  Matrix bread_proxy = detail::accumulate_bread(
      spec, data_proxy, w, gamma, 0.0, [&](std::size_t i, const Vector& g) {
        const double w2 = w[i] * w[i];
        for (std::size_t a = 0; a < d; ++a) {
          const double lhs = w2 * scores_true(i, a);
          for (std::size_t b = 0; b < d; ++b) c12(a, b) += lhs * g[b];
        }
      });
  for (double& v : c12.data()) v /= static_cast<double>(n);

  Matrix half;
  try {
    half = solve_spd(bread_true, c12);  // D1^-1 C12
  } catch (const NotSpdError&) {
    throw RankDeficientError("cross-covariance bread matrix is singular");
  }
  return solve_spd(bread_proxy, half.transposed()).transposed();
}

}  // namespace ptd
